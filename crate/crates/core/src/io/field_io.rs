//! Text field files.
//!
//! A header `# cdii-field N=<n> a=<a> b=<b>` followed by `N + 1` rows of
//! `N + 1` comma-separated values, row `j` (constant `y`) per line. Values
//! use the shortest decimal that parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CdiiError, Result};
use crate::grid::{Grid, ScalarField};

const MAGIC: &str = "# cdii-field";

pub fn format_field(field: &ScalarField) -> String {
    let g = field.grid();
    let side = g.side();
    let mut out = String::with_capacity(g.len() * 20);
    let _ = writeln!(out, "{MAGIC} N={} a={} b={}", g.n_cells(), g.a(), g.b());
    for row in field.values().chunks(side) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_field(text: &str) -> Result<ScalarField> {
    let bad = |m: String| CdiiError::FieldFormat(m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad(format!("missing `{MAGIC}` header")))?;
    let (mut n, mut a, mut b) = (None, None, None);
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("N", v)) => n = v.parse::<usize>().ok(),
            Some(("a", v)) => a = v.parse::<f64>().ok(),
            Some(("b", v)) => b = v.parse::<f64>().ok(),
            _ => return Err(bad(format!("unexpected header token `{tok}`"))),
        }
    }
    let (n, a, b) = match (n, a, b) {
        (Some(n), Some(a), Some(b)) => (n, a, b),
        _ => return Err(bad("header needs N, a and b".into())),
    };
    let grid = Grid::new(n, a, b).map_err(|e| bad(e.to_string()))?;
    let side = grid.side();
    let mut values = Vec::with_capacity(grid.len());
    let mut rows = 0;
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        rows += 1;
        if rows > side {
            return Err(bad(format!("more than {side} data rows")));
        }
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: cannot parse `{}`", k + 1, tok.trim())))?;
            values.push(v);
        }
        if values.len() - before != side {
            return Err(bad(format!("row {} has {} values, expected {side}", k + 1, values.len() - before)));
        }
    }
    if rows != side {
        return Err(bad(format!("found {rows} data rows, expected {side}")));
    }
    ScalarField::new(grid, values).map_err(|e| bad(e.to_string()))
}

pub fn write_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    std::fs::write(path, format_field(field))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CdiiError::FileNotFound(path.to_path_buf()),
        _ => CdiiError::Io(e),
    })?;
    parse_field(&text)
}
