//! Flat `key = value` run configuration with `#` comments.
//!
//! ```text
//! test_case = 1
//! n_coarse = 60
//! algo = vip
//! theta = 0.5
//! shape = disk cx=0.25 cy=0.25 r=0.25 value=1
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{CdiiError, Result};
use crate::linalg::{SolverMethod, SolverOptions};
use crate::phantom::{Geometry, NoiseSpec, Phantom, Shape, TestCase};
use crate::picard::PicardConfig;
use crate::vip::VipConfig;

/// Which reconstruction(s) to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    Vip,
    Picard,
    Both,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Vip => "vip",
            Algorithm::Picard => "picard",
            Algorithm::Both => "both",
        }
    }
}

impl FromStr for Algorithm {
    type Err = CdiiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vip" => Ok(Algorithm::Vip),
            "picard" => Ok(Algorithm::Picard),
            "both" => Ok(Algorithm::Both),
            other => Err(CdiiError::OutOfRange {
                key: "algo".into(),
                message: format!("expected vip, picard or both, got `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub test_case: Option<TestCase>,
    pub phantom: Phantom,
    pub n_fine: usize,
    pub n_coarse: usize,
    pub algorithm: Algorithm,
    pub vip: VipConfig,
    pub picard: PicardConfig,
    /// Constant initial log-conductivity for VIP.
    pub sigma0: f64,
    pub noise: f64,
    pub seed: u64,
    pub solver: SolverOptions,
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            test_case: Some(TestCase::Disk),
            phantom: TestCase::Disk.phantom(),
            n_fine: 200,
            n_coarse: 60,
            algorithm: Algorithm::Vip,
            vip: VipConfig::default(),
            picard: PicardConfig::default(),
            sigma0: 0.0,
            noise: 0.0,
            seed: 0,
            solver: SolverOptions::default(),
            data_dir: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Configuration for one of the reference phantoms, with its bounds.
    pub fn for_test_case(tc: TestCase) -> Self {
        let mut c = Self {
            test_case: Some(tc),
            phantom: tc.phantom(),
            ..Self::default()
        };
        c.vip.bounds = tc.bounds();
        c.vip.weights = tc.weights();
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.vip.validate()?;
        self.picard.validate()?;
        if self.n_coarse < 2 {
            return Err(out_of_range("n_coarse", "must be at least 2"));
        }
        if self.n_fine <= self.n_coarse {
            return Err(out_of_range("n_fine", "must exceed n_coarse"));
        }
        NoiseSpec::new(self.noise, self.seed)?;
        if !self.vip.bounds.contains(self.sigma0) {
            return Err(out_of_range("sigma0", "must lie within [sigma_l, sigma_u]"));
        }
        if !(self.solver.rel_tol > 0.0 && self.solver.rel_tol < 1.0) {
            return Err(out_of_range("solver_tol", "must lie in (0, 1)"));
        }
        self.phantom.validate(&self.vip.bounds, -1.0, 1.0)
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            level: self.noise,
            seed: self.seed,
            stream: 0,
        }
    }

    /// Every effective setting, in the order written by [`Self::to_config_string`].
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        if let Some(tc) = self.test_case {
            put("test_case", tc.number().to_string());
        }
        let w = &self.vip.weights;
        put("n_fine", self.n_fine.to_string());
        put("n_coarse", self.n_coarse.to_string());
        put("algo", self.algorithm.as_str().into());
        put("alpha1", w.alpha1.to_string());
        put("alpha2", w.alpha2.to_string());
        put("beta", w.beta.to_string());
        put("gamma", w.gamma.to_string());
        put("delta", w.delta.to_string());
        put("c_denoise", w.c_denoise.to_string());
        put("theta", self.vip.theta.to_string());
        put("c1", self.vip.c1.to_string());
        put("c2", self.vip.c2.to_string());
        put("n_backtrack", self.vip.n_backtrack.to_string());
        put("l0", self.vip.l0.to_string());
        put("tol", self.vip.tol.to_string());
        put("max_iter", self.vip.max_iter.to_string());
        put("max_backtrack", self.vip.max_backtrack.to_string());
        put("k_param", self.vip.k_param.to_string());
        put("sigma_l", self.vip.bounds.sigma_l.to_string());
        put("sigma_u", self.vip.bounds.sigma_u.to_string());
        put("sigma0", self.sigma0.to_string());
        put("picard_max_iter", self.picard.max_iter.to_string());
        put("picard_tol", self.picard.tol.to_string());
        put("picard_sigma0", self.picard.initial.to_string());
        put("noise", self.noise.to_string());
        put("seed", self.seed.to_string());
        put("solver", solver_name(self.solver.method).into());
        put("solver_tol", self.solver.rel_tol.to_string());
        put("solver_max_iter", self.solver.max_iter.to_string());
        if let Some(d) = &self.data_dir {
            put("data_dir", d.display().to_string());
        }
        put("output_dir", self.output_dir.display().to_string());
        put("background", self.phantom.background.to_string());
        for (i, s) in self.phantom.shapes.iter().enumerate() {
            put(&format!("shape.{i:03}"), format_shape(s));
        }
        m
    }

    /// A config file that parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let echo = self.echo();
        // explicit shapes replace the test case phantom
        let custom = self.test_case.is_none_or(|tc| tc.phantom() != self.phantom);
        for (k, v) in &echo {
            if k.starts_with("shape.") {
                if custom {
                    let _ = writeln!(out, "shape = {v}");
                }
            } else if (k == "test_case" && custom) || (k == "background" && !custom) {
                continue;
            } else {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

fn out_of_range(key: &str, message: &str) -> CdiiError {
    CdiiError::OutOfRange {
        key: key.into(),
        message: message.into(),
    }
}

fn solver_name(m: SolverMethod) -> &'static str {
    match m {
        SolverMethod::Auto => "auto",
        SolverMethod::Direct => "direct",
        SolverMethod::ConjugateGradient => "cg",
    }
}

/// `kind k=v ... value=v` for one shape.
pub fn format_shape(s: &Shape) -> String {
    let mut out = String::new();
    if let Ok(Value::Object(map)) = serde_json::to_value(s.geometry) {
        if let Some(Value::String(kind)) = map.get("kind") {
            out.push_str(kind);
        }
        for (k, v) in map.iter().filter(|(k, _)| k.as_str() != "kind") {
            let _ = write!(out, " {k}={}", v.as_f64().unwrap_or(f64::NAN));
        }
    }
    let _ = write!(out, " value={}", s.value);
    out
}

/// Parses `kind k=v ... value=v`.
pub fn parse_shape(text: &str) -> std::result::Result<Shape, String> {
    let mut parts = text.split_whitespace();
    let kind = parts.next().ok_or("empty shape")?;
    let mut map = Map::new();
    map.insert("kind".into(), Value::String(kind.to_ascii_lowercase()));
    let mut value = None;
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| format!("expected name=value, got `{p}`"))?;
        let x: f64 = v.parse().map_err(|_| format!("`{k}` is not a number: `{v}`"))?;
        if k == "value" {
            value = Some(x);
        } else if map.insert(k.into(), x.into()).is_some() {
            return Err(format!("duplicate parameter `{k}`"));
        }
    }
    let value = value.ok_or("missing value=")?;
    let given: Vec<String> = map.keys().cloned().collect();
    let geometry: Geometry = serde_json::from_value(Value::Object(map)).map_err(|e| format!("bad shape: {e}"))?;
    // serde ignores extra fields, so compare against the canonical form
    if let Ok(Value::Object(canon)) = serde_json::to_value(geometry) {
        if let Some(extra) = given.iter().find(|k| !canon.contains_key(k.as_str())) {
            return Err(format!("unknown shape parameter `{extra}`"));
        }
    }
    Ok(Shape { geometry, value })
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_with_base(&text, base)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    parse_with_base(text, Path::new(""))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CdiiError::FileNotFound(path.to_path_buf()),
        _ => CdiiError::Io(e),
    })
}

/// Non-empty, non-comment lines as `(line number, key, value)`.
fn entries(text: &str) -> impl Iterator<Item = Result<(usize, String, String)>> + '_ {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return None;
        }
        Some(match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => Ok((i + 1, k.trim().to_ascii_lowercase(), v.trim().to_string())),
            _ => Err(CdiiError::Config {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            }),
        })
    })
}

/// Reads a phantom file holding `shape` and `background` lines.
pub fn parse_phantom_file(path: &Path) -> Result<Phantom> {
    let text = read_text(path)?;
    let mut phantom = Phantom::default();
    for e in entries(&text) {
        let (line, key, value) = e?;
        match key.as_str() {
            "shape" => phantom
                .shapes
                .push(parse_shape(&value).map_err(|message| CdiiError::Config { line, message })?),
            "background" => phantom.background = num(&key, &value, line)?,
            _ => return Err(CdiiError::UnknownKey { key, line }),
        }
    }
    Ok(phantom)
}

fn num<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| CdiiError::Config {
        line,
        message: format!("`{key}`: cannot parse `{value}`"),
    })
}

fn parse_with_base(text: &str, base: &Path) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    let mut shapes = Vec::new();
    let mut background = None;
    let mut phantom_file = None;
    let mut bounds_given = (false, false);
    let mut test_case_given = false;

    for e in entries(text) {
        let (line, key, value) = e?;
        let v = value.as_str();
        let w = &mut c.vip.weights;
        match key.as_str() {
            "test_case" => {
                c.test_case = Some(TestCase::from_number(num(&key, v, line)?).map_err(|_| CdiiError::OutOfRange {
                    key: key.clone(),
                    message: format!("expected 1-4, got `{v}`"),
                })?);
                test_case_given = true;
            }
            "phantom" => phantom_file = Some(base.join(v)),
            "shape" => shapes.push(parse_shape(v).map_err(|message| CdiiError::Config { line, message })?),
            "background" => background = Some(num(&key, v, line)?),
            "n_fine" => c.n_fine = num(&key, v, line)?,
            "n_coarse" | "n" => c.n_coarse = num(&key, v, line)?,
            "algo" | "algorithm" => c.algorithm = v.parse()?,
            "alpha1" => w.alpha1 = num(&key, v, line)?,
            "alpha2" => w.alpha2 = num(&key, v, line)?,
            "beta" => w.beta = num(&key, v, line)?,
            "gamma" => w.gamma = num(&key, v, line)?,
            "delta" => w.delta = num(&key, v, line)?,
            "c_denoise" => w.c_denoise = num(&key, v, line)?,
            "theta" => c.vip.theta = num(&key, v, line)?,
            "c1" => c.vip.c1 = num(&key, v, line)?,
            "c2" => c.vip.c2 = num(&key, v, line)?,
            "n_backtrack" => c.vip.n_backtrack = num(&key, v, line)?,
            "l0" => c.vip.l0 = num(&key, v, line)?,
            "tol" => c.vip.tol = num(&key, v, line)?,
            "max_iter" => c.vip.max_iter = num(&key, v, line)?,
            "max_backtrack" => c.vip.max_backtrack = num(&key, v, line)?,
            "k_param" => c.vip.k_param = num(&key, v, line)?,
            "sigma_l" => {
                c.vip.bounds.sigma_l = num(&key, v, line)?;
                bounds_given.0 = true;
            }
            "sigma_u" => {
                c.vip.bounds.sigma_u = num(&key, v, line)?;
                bounds_given.1 = true;
            }
            "sigma0" => c.sigma0 = num(&key, v, line)?,
            "picard_max_iter" => c.picard.max_iter = num(&key, v, line)?,
            "picard_tol" => c.picard.tol = num(&key, v, line)?,
            "picard_sigma0" => c.picard.initial = num(&key, v, line)?,
            "noise" => c.noise = num(&key, v, line)?,
            "seed" => c.seed = num(&key, v, line)?,
            "solver" => {
                c.solver.method = match v.to_ascii_lowercase().as_str() {
                    "auto" => SolverMethod::Auto,
                    "direct" => SolverMethod::Direct,
                    "cg" => SolverMethod::ConjugateGradient,
                    _ => return Err(out_of_range("solver", "expected auto, direct or cg")),
                }
            }
            "solver_tol" => c.solver.rel_tol = num(&key, v, line)?,
            "solver_max_iter" => c.solver.max_iter = num(&key, v, line)?,
            "data_dir" => c.data_dir = Some(base.join(v)),
            "output_dir" => c.output_dir = base.join(v),
            _ => return Err(CdiiError::UnknownKey { key, line }),
        }
    }

    if let Some(tc) = c.test_case {
        c.phantom = tc.phantom();
        let tb = tc.bounds();
        if !bounds_given.0 {
            c.vip.bounds.sigma_l = tb.sigma_l;
        }
        if !bounds_given.1 {
            c.vip.bounds.sigma_u = tb.sigma_u;
        }
    }
    if let Some(path) = phantom_file {
        c.phantom = parse_phantom_file(&path)?;
        c.test_case = None;
    }
    if !shapes.is_empty() {
        if test_case_given {
            return Err(out_of_range("shape", "cannot be combined with test_case"));
        }
        c.phantom = Phantom::new(shapes, background.unwrap_or(0.0));
        c.test_case = None;
    } else if let Some(b) = background {
        c.phantom.background = b;
    }
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gives_defaults() {
        let c = parse_config_str("# nothing but a comment\n\n").unwrap();
        assert_eq!((c.vip.theta, c.vip.c1, c.vip.c2), (0.5, 1.9, 0.001));
        assert_eq!(c.algorithm, Algorithm::Vip);
        assert_eq!(c.test_case, Some(TestCase::Disk));
    }

    #[test]
    fn theta_out_of_range_rejected() {
        match parse_config_str("theta = 1.5") {
            Err(CdiiError::OutOfRange { key, .. }) => assert_eq!(key, "theta"),
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        match parse_config_str("beta = 0.1\nfoo = 3\n") {
            Err(CdiiError::UnknownKey { key, line }) => assert_eq!((key.as_str(), line), ("foo", 2)),
            other => panic!("expected unknown key, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_reported() {
        match parse_config("/definitely/not/here.cfg") {
            Err(CdiiError::FileNotFound(p)) => assert!(p.ends_with("here.cfg")),
            other => panic!("expected file-not-found, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(matches!(parse_config_str("beta 0.1"), Err(CdiiError::Config { line: 1, .. })));
        assert!(matches!(parse_config_str("beta = abc"), Err(CdiiError::Config { line: 1, .. })));
    }

    #[test]
    fn test_case_four_widens_bounds() {
        let c = parse_config_str("test_case = 4").unwrap();
        assert_eq!(c.vip.bounds.sigma_u, 5.0);
        assert!(parse_config_str("test_case = 4\nsigma_u = 3.5").is_err());
    }

    #[test]
    fn custom_shapes() {
        let c = parse_config_str(
            "shape = disk cx=0 cy=0 r=0.3 value=1.5\nshape = rect x0=-0.9 x1=-0.5 y0=-0.9 y1=-0.5 value=-1\nbackground = 0.1",
        )
        .unwrap();
        assert_eq!(c.test_case, None);
        assert_eq!(c.phantom.shapes.len(), 2);
        assert_eq!(c.phantom.value_at(0.0, 0.0), 1.5);
        assert_eq!(c.phantom.value_at(0.9, 0.9), 0.1);
        assert!(parse_config_str("shape = disk cx=0 cy=0 r=0.3 q=2 value=1").is_err());
        assert!(parse_config_str("shape = blob cx=0 value=1").is_err());
        assert!(parse_config_str("shape = disk cx=0 cy=0 r=0.3").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = parse_config_str("test_case = 2\nnoise = 0.1\nseed = 9\nbeta = 0.05\nalgo = both").unwrap();
        assert_eq!(parse_config_str(&c.to_config_string()).unwrap(), c);
        c = parse_config_str("shape = cardioid cx=-0.5 cy=0.5 s=0.1 phi0=1.5707963267948966 value=3").unwrap();
        assert_eq!(parse_config_str(&c.to_config_string()).unwrap(), c);
    }
}
