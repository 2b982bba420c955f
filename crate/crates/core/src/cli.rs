//! Command-line front end and the pipeline glue behind it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Result;
use crate::grid::{Grid, ScalarField};
use crate::io::{self, Algorithm, RunConfig};
use crate::objective::Problem;
use crate::pde::{self, BoundaryData};
use crate::phantom::{self, rasterize, TestCase};
use crate::picard;
use crate::report::{self, Metrics, Provenance, ReconReport};
use crate::vip;

pub const H1_FILE: &str = "h1.csv";
pub const H2_FILE: &str = "h2.csv";
pub const TRUTH_FILE: &str = "sigma_true.csv";

/// Interior data plus the ground truth when known.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub h1: ScalarField,
    pub h2: ScalarField,
    pub truth: Option<ScalarField>,
}

impl Dataset {
    /// Synthesises data from the configured phantom, noise and grids.
    pub fn generate(config: &RunConfig) -> Result<Self> {
        let (h1, h2) = phantom::generate_pair_with(&config.phantom, config.n_fine, config.n_coarse, config.solver)?;
        let spec = config.noise_spec();
        Ok(Self {
            h1: phantom::add_noise(&h1, &spec.with_stream(1)),
            h2: phantom::add_noise(&h2, &spec.with_stream(2)),
            truth: Some(rasterize(&config.phantom, Grid::unit(config.n_coarse)?)),
        })
    }

    /// Reads `h1.csv`, `h2.csv` and, if present, `sigma_true.csv`.
    pub fn load(dir: &Path) -> Result<Self> {
        let h1 = io::read_field(dir.join(H1_FILE))?;
        let h2 = io::read_field(dir.join(H2_FILE))?;
        h1.check_same_grid(&h2)?;
        let truth_path = dir.join(TRUTH_FILE);
        let truth = if truth_path.exists() {
            let t = io::read_field(truth_path)?;
            t.check_same_grid(&h1)?;
            Some(t)
        } else {
            None
        };
        Ok(Self { h1, h2, truth })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_field(dir.join(H1_FILE), &self.h1)?;
        io::write_field(dir.join(H2_FILE), &self.h2)?;
        if let Some(t) = &self.truth {
            io::write_field(dir.join(TRUTH_FILE), t)?;
        }
        Ok(())
    }

    pub fn for_config(config: &RunConfig) -> Result<Self> {
        match &config.data_dir {
            Some(dir) => Self::load(dir),
            None => Self::generate(config),
        }
    }
}

/// Runs one method on `data` and fills in metrics and provenance.
pub fn reconstruct(config: &RunConfig, data: &Dataset, method: report::Algorithm) -> Result<ReconReport> {
    let start = Instant::now();
    let mut report = match method {
        report::Algorithm::Vip => {
            let mut problem = Problem::new(data.h1.clone(), data.h2.clone())?;
            problem.solver = config.solver;
            let sigma0 = ScalarField::constant(*problem.grid(), config.sigma0);
            let out = vip::vip_run(&problem, &config.vip, &sigma0)?;
            ReconReport::from_vip(out, start.elapsed().as_secs_f64())
        }
        report::Algorithm::Picard => {
            let a0 = ScalarField::constant(*data.h1.grid(), config.picard.initial);
            let out = picard::picard_run_from(
                &data.h1,
                &data.h2,
                BoundaryData::x(),
                BoundaryData::y(),
                &config.picard,
                &a0,
                config.solver,
            )?;
            ReconReport::from_picard(out, start.elapsed().as_secs_f64())
        }
    };
    if let Some(t) = &data.truth {
        report = report.with_truth(t)?;
    }
    let seed = (config.noise > 0.0).then_some(config.seed);
    Ok(report.with_provenance(Provenance::new(seed, config.echo())))
}

/// Writes `sigma_<algo>.csv`, `sigma_<algo>.png` and `report_<algo>.json`.
pub fn save_report(report: &ReconReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let name = report.algorithm.to_string();
    io::write_field(dir.join(format!("sigma_{name}.csv")), &report.sigma)?;
    io::render_png(&report.sigma, dir.join(format!("sigma_{name}.png")), None)?;
    std::fs::write(dir.join(format!("report_{name}.json")), report.to_json()?)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub vip: Option<Metrics>,
    pub picard: Option<Metrics>,
    pub vip_iterations: usize,
    pub picard_iterations: usize,
}

/// Runs both methods on the same data, concurrently when threads allow.
pub fn compare(config: &RunConfig, data: &Dataset) -> Result<(ReconReport, ReconReport)> {
    let (v, p) = pde::join(
        || reconstruct(config, data, report::Algorithm::Vip),
        || reconstruct(config, data, report::Algorithm::Picard),
    );
    Ok((v?, p?))
}

#[derive(Debug, Parser)]
#[command(name = "cdii", version, about = "Sparse log-conductivity reconstruction from interior current density data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesise interior data from a phantom.
    Generate(GenerateArgs),
    /// Reconstruct from data files or a freshly generated data set.
    Reconstruct(RunArgs),
    /// Run VIP and Picard on the same data and compare errors.
    Compare(RunArgs),
    /// Render a field file to PNG.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    test_case: Option<u32>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_fine: Option<usize>,
    #[arg(long)]
    n_coarse: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    test_case: Option<u32>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_coarse: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, requires = "max")]
    min: Option<f64>,
    #[arg(long, requires = "min")]
    max: Option<f64>,
}

fn base_config(path: &Option<PathBuf>, test_case: Option<u32>) -> Result<RunConfig> {
    let mut c = match path {
        Some(p) => io::parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = test_case {
        let tc = TestCase::from_number(n)?;
        let fresh = RunConfig::for_test_case(tc);
        c.test_case = Some(tc);
        c.phantom = fresh.phantom;
        c.vip.bounds = fresh.vip.bounds;
    }
    Ok(c)
}

fn generate_cmd(args: GenerateArgs) -> Result<()> {
    let mut c = base_config(&args.config, args.test_case)?;
    c.noise = args.noise.unwrap_or(c.noise);
    c.seed = args.seed.unwrap_or(c.seed);
    c.n_fine = args.n_fine.unwrap_or(c.n_fine);
    c.n_coarse = args.n_coarse.unwrap_or(c.n_coarse);
    c.validate()?;
    let out = args.output.unwrap_or(c.output_dir.clone());
    let data = Dataset::generate(&c)?;
    data.save(&out)?;
    std::fs::write(out.join("generate.cfg"), c.to_config_string())?;
    println!("wrote {}, {} and {} to {}", H1_FILE, H2_FILE, TRUTH_FILE, out.display());
    Ok(())
}

fn run_config(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut c = base_config(&args.config, args.test_case)?;
    if let Some(a) = &args.algo {
        c.algorithm = a.parse()?;
    }
    if args.data_dir.is_some() {
        c.data_dir = args.data_dir.clone();
    }
    c.noise = args.noise.unwrap_or(c.noise);
    c.seed = args.seed.unwrap_or(c.seed);
    c.n_coarse = args.n_coarse.unwrap_or(c.n_coarse);
    if let Some(m) = args.max_iter {
        c.vip.max_iter = m;
        c.picard.max_iter = m;
    }
    c.validate()?;
    let out = args.output.clone().unwrap_or(c.output_dir.clone());
    Ok((c, out))
}

fn print_summary(r: &ReconReport) {
    let err = r.metrics.map_or("n/a".to_string(), |m| format!("{:.4}", m.l2_error));
    println!(
        "{:<7} iterations {:>3}  converged {:<5}  L2 error {}  time {:.2}s",
        r.algorithm, r.iterations, r.converged, err, r.wall_time_s
    );
}

fn reconstruct_cmd(args: RunArgs) -> Result<()> {
    let (c, out) = run_config(&args)?;
    let data = Dataset::for_config(&c)?;
    let methods: &[report::Algorithm] = match c.algorithm {
        Algorithm::Vip => &[report::Algorithm::Vip],
        Algorithm::Picard => &[report::Algorithm::Picard],
        Algorithm::Both => &[report::Algorithm::Vip, report::Algorithm::Picard],
    };
    for &m in methods {
        let r = reconstruct(&c, &data, m)?;
        save_report(&r, &out)?;
        print_summary(&r);
    }
    Ok(())
}

fn compare_cmd(args: RunArgs) -> Result<()> {
    let (c, out) = run_config(&args)?;
    let data = Dataset::for_config(&c)?;
    let (v, p) = compare(&c, &data)?;
    save_report(&v, &out)?;
    save_report(&p, &out)?;
    let cmp = Comparison {
        vip: v.metrics,
        picard: p.metrics,
        vip_iterations: v.iterations,
        picard_iterations: p.iterations,
    };
    std::fs::write(out.join("compare.json"), serde_json::to_string_pretty(&cmp)?)?;
    print_summary(&v);
    print_summary(&p);
    Ok(())
}

fn render_cmd(args: RenderArgs) -> Result<()> {
    let field = io::read_field(&args.input)?;
    let range = args.min.zip(args.max);
    io::render_png(&field, &args.output, range)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate_cmd(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Render(a) => render_cmd(a),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on failure, 2 on usage errors.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}
