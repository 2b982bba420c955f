//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use cdii::cli::{cli_main, Dataset};
use cdii::grid::{Grid, ScalarField};
use cdii::io::RunConfig;
use cdii::linalg::SolverOptions;
use cdii::objective::{interior_data, BoxBounds, Problem, Weights};
use cdii::pde::{self, BoundaryData};
use cdii::phantom::{self, rasterize, TestCase};
use cdii::picard::{self, PicardConfig};
use cdii::vip::{self, complementarity_scalar, multipliers, soft_threshold_scalar, VipConfig, VipOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const EXACTNESS_TOL: f64 = 1e-8;
const EXACTNESS_TIME: Duration = Duration::from_secs(5);
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_DIRECTIONS: usize = 6;
const FIXED_POINT_TOL: f64 = 1e-4;
const MAJORIZATION_REL_TOL: f64 = 1e-12;
const DISK_MEAN_MIN: f64 = 0.7;
const BACKGROUND_MEAN_MAX: f64 = 0.1;
const QUALITY_TIME: Duration = Duration::from_secs(120);
const NOISE_DEGRADATION_MAX: f64 = 2.0;
const RESTRICTION_RATIO_MAX: f64 = 4.0;
const STATIONARY_SAMPLES: usize = 1000;
const NOISE_SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run_vip(tc: TestCase, data: &Dataset, config: &VipConfig) -> VipOutcome {
    let problem = Problem::new(data.h1.clone(), data.h2.clone()).unwrap();
    let cfg = VipConfig {
        bounds: tc.bounds(),
        ..*config
    };
    vip::vip_run(&problem, &cfg, &ScalarField::zeros(*problem.grid())).unwrap()
}

fn run_picard(data: &Dataset) -> ScalarField {
    picard::picard_run(&data.h1, &data.h2, BoundaryData::x(), BoundaryData::y(), &PicardConfig::default())
        .unwrap()
        .sigma
}

fn dataset(tc: TestCase, n_coarse: usize, noise: f64) -> Dataset {
    let config = RunConfig {
        noise,
        seed: NOISE_SEED,
        n_fine: 200,
        n_coarse,
        ..RunConfig::for_test_case(tc)
    };
    Dataset::generate(&config).unwrap()
}

fn rel_error(sigma: &ScalarField, truth: &ScalarField) -> f64 {
    sigma.sub(truth).unwrap().norm_l2() / truth.norm_l2()
}

fn criterion_1() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for n in [20, 150] {
        let g = Grid::unit(n).unwrap();
        let start = Instant::now();
        let u = pde::solve_forward(&ScalarField::constant(g, 0.7), |x, _| x, SolverOptions::default()).unwrap();
        let elapsed = start.elapsed();
        let err = u.sub(&ScalarField::from_fn(g, |x, _| x)).unwrap().norm_max();
        pass &= err <= EXACTNESS_TOL && elapsed < EXACTNESS_TIME;
        details.push(format!("N={n} max|u-x|={err:.2e} in {:.2}s", elapsed.as_secs_f64()));
    }
    outcome(pass, details.join(", "))
}

fn criterion_2() -> Outcome {
    let data = dataset(TestCase::Disk, 40, 0.0);
    let problem = Problem::new(data.h1, data.h2).unwrap();
    let g = *problem.grid();
    let w = Weights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sigma = ScalarField::new(g, (0..g.len()).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
    let (_, grad) = problem.j1_and_gradient(&sigma, &w).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..FD_DIRECTIONS {
        let d = ScalarField::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let plus = problem.j1(&sigma.axpy(FD_STEP, &d).unwrap(), &w).unwrap();
        let minus = problem.j1(&sigma.axpy(-FD_STEP, &d).unwrap(), &w).unwrap();
        let fd = (plus - minus) / (2.0 * FD_STEP);
        let ad = grad.dot(&d);
        worst = worst.max((fd - ad).abs() / fd.abs().max(ad.abs()));
    }
    outcome(
        worst <= FD_REL_TOL,
        format!("{FD_DIRECTIONS} directions, worst relative mismatch {worst:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let b = BoxBounds::new(-4.0, 4.0).unwrap();
    let mut fails = Vec::new();

    let threshold_cases = [
        (0.0, 0.7, 0.0),
        (0.5, 0.2, 0.3),
        (-0.5, 0.2, -0.3),
        (10.0, 0.2, 4.0),
        (-10.0, 0.2, -4.0),
    ];
    for (v, tau, want) in threshold_cases {
        let got = soft_threshold_scalar(v, tau, &b);
        if (got - want).abs() > 1e-15 {
            fails.push(format!("S({v},{tau})={got}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gamma = 0.3;
    let mut zero_ok = 0;
    let mut perturbed_nonzero = 0;
    for _ in 0..STATIONARY_SAMPLES {
        let cases = [
            (0.0, rng.gen_range(-gamma..=gamma)),
            (rng.gen_range(b.sigma_l..0.0), -gamma),
            (rng.gen_range(f64::MIN_POSITIVE..b.sigma_u), gamma),
        ];
        for (s, m) in cases {
            if complementarity_scalar(s, m, gamma, 1.0, &b) == 0.0 {
                zero_ok += 1;
            }
            let eps = rng.gen_range(0.01..0.5) * if rng.gen() { 1.0 } else { -1.0 };
            let (ps, pm) = if s == 0.0 { (eps, m) } else { (s, m + eps) };
            if complementarity_scalar(ps, pm, gamma, 1.0, &b) != 0.0 {
                perturbed_nonzero += 1;
            }
        }
    }
    let total = 3 * STATIONARY_SAMPLES;
    if zero_ok != total {
        fails.push(format!("E=0 on {zero_ok}/{total} stationary samples"));
    }
    if perturbed_nonzero != total {
        fails.push(format!("E!=0 on {perturbed_nonzero}/{total} perturbed samples"));
    }

    let g = Grid::unit(31).unwrap();
    let mu = ScalarField::new(g, (0..g.len()).map(|_| rng.gen_range(-5.0 * gamma..5.0 * gamma)).collect()).unwrap();
    let t = multipliers(&mu, gamma);
    let recombined = t.lambda.add(&t.lambda_u).unwrap().sub(&t.lambda_l).unwrap();
    let bad = recombined
        .values()
        .iter()
        .zip(mu.values())
        .filter(|(r, m)| (*r - *m).abs() > 1e-15 * (1.0 + m.abs()))
        .count();
    if bad > 0 {
        let neg = mu.values().iter().filter(|m| **m < 0.0).count();
        fails.push(format!(
            "multiplier identity broken at {bad}/{} nodes ({neg} with mu<0)",
            g.len()
        ));
    }
    let pass = fails.is_empty();
    let detail = if pass {
        format!("threshold branches, {total} stationary and perturbed samples, multiplier identity")
    } else {
        fails.join("; ")
    };
    outcome(pass, detail)
}

fn criterion_4() -> Outcome {
    let g = Grid::unit(30).unwrap();
    let zero = ScalarField::zeros(g);
    let op = pde::ConductivityOperator::new(&zero, SolverOptions::default()).unwrap();
    let h1 = interior_data(&zero, &op.solve_dirichlet(|x, _| x).unwrap()).unwrap();
    let h2 = interior_data(&zero, &op.solve_dirichlet(|_, y| y).unwrap()).unwrap();
    let problem = Problem::new(h1, h2).unwrap();
    let mut iterates_zero = true;
    let out = vip::vip_run_with(&problem, &VipConfig::default(), &zero, |_, next| {
        iterates_zero &= next.norm_max() == 0.0;
    })
    .unwrap();
    let e0 = out.history[0].residual;
    let pass = iterates_zero && out.sigma.norm_max() == 0.0 && e0 <= FIXED_POINT_TOL && out.converged;
    outcome(
        pass,
        format!(
            "{} iteration(s), all iterates zero: {iterates_zero}, |E_0|={e0:.2e}",
            out.history.len()
        ),
    )
}

struct QualityRun {
    vip: VipOutcome,
    vip_time: Duration,
    picard: ScalarField,
    truth: ScalarField,
}

fn tc1_quality_run() -> QualityRun {
    let data = dataset(TestCase::Disk, 60, 0.0);
    let start = Instant::now();
    let vip = run_vip(TestCase::Disk, &data, &VipConfig::default());
    let vip_time = start.elapsed();
    QualityRun {
        vip,
        vip_time,
        picard: run_picard(&data),
        truth: data.truth.unwrap(),
    }
}

fn criterion_5(run: &QualityRun) -> Outcome {
    let h = &run.vip.history;
    let violations = h
        .iter()
        .filter(|r| r.j1_next - r.majorant > MAJORIZATION_REL_TOL * r.majorant.abs())
        .count();
    let worst = h
        .iter()
        .map(|r| (r.j1_next - r.majorant) / r.majorant.abs())
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        violations == 0 && h.len() == 20,
        format!(
            "{} accepted steps, {violations} violations, max (lhs-rhs)/|rhs| = {worst:.2e}",
            h.len()
        ),
    )
}

fn criterion_6(run: &QualityRun) -> Outcome {
    let vip_err = rel_error(&run.vip.sigma, &run.truth);
    let picard_err = rel_error(&run.picard, &run.truth);
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0, 0.0, 0);
    for (v, t) in run.vip.sigma.values().iter().zip(run.truth.values()) {
        if *t == 1.0 {
            inside += v;
            n_in += 1;
        } else {
            outside += v;
            n_out += 1;
        }
    }
    let disk_mean = inside / n_in as f64;
    let bg_mean = outside / n_out as f64;
    let pass = vip_err < picard_err
        && disk_mean >= DISK_MEAN_MIN
        && bg_mean <= BACKGROUND_MEAN_MAX
        && run.vip_time < QUALITY_TIME;
    outcome(
        pass,
        format!(
            "rel L2 vip {vip_err:.4} vs picard {picard_err:.4}, disk mean {disk_mean:.3} (>= {DISK_MEAN_MIN}), \
             background mean {bg_mean:.4} (<= {BACKGROUND_MEAN_MAX}), vip time {:.1}s",
            run.vip_time.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let tc = TestCase::HeartLung;
    let d10 = dataset(tc, 60, 0.10);
    let truth = d10.truth.clone().unwrap();
    let vip10 = rel_error(&run_vip(tc, &d10, &VipConfig::default()).sigma, &truth);
    let picard10 = rel_error(&run_picard(&d10), &truth);

    let d25 = dataset(tc, 60, 0.25);
    let strong = VipConfig {
        weights: Weights {
            beta: 0.05,
            gamma: 0.5,
            delta: 0.1,
            c_denoise: 0.01,
            ..Weights::default()
        },
        ..VipConfig::default()
    };
    let vip25 = rel_error(&run_vip(tc, &d25, &strong).sigma, &truth);
    let pass = vip10 < picard10 && vip25 <= NOISE_DEGRADATION_MAX * vip10;
    outcome(
        pass,
        format!(
            "10% noise: vip {vip10:.4} vs picard {picard10:.4}; 25% noise: vip {vip25:.4} (<= {:.4})",
            NOISE_DEGRADATION_MAX * vip10
        ),
    )
}

fn criterion_8() -> Outcome {
    let data = dataset(TestCase::Disk, 40, 0.0);
    let residuals = |theta: f64| -> Vec<f64> {
        let cfg = VipConfig {
            theta,
            ..VipConfig::default()
        };
        run_vip(TestCase::Disk, &data, &cfg).history.iter().map(|r| r.residual).collect()
    };
    let diverging = residuals(1.5);
    let converging = residuals(0.5);
    let e0 = diverging[0];
    let min_later = diverging[1..].iter().copied().fold(f64::INFINITY, f64::min);
    let final_half = *converging.last().unwrap();
    let pass = min_later >= e0 && final_half < converging[0];
    outcome(
        pass,
        format!(
            "theta=1.5: |E_0|={e0:.4}, min later {min_later:.4}; theta=0.5: {:.4} -> {final_half:.4}",
            converging[0]
        ),
    )
}

fn criterion_9() -> Outcome {
    let truth = TestCase::Disk.phantom();
    let diff = |n: usize| -> f64 {
        let restricted = phantom::generate_data(&truth, BoundaryData::x(), 200, n, SolverOptions::default()).unwrap();
        let g = Grid::unit(n).unwrap();
        let sigma = rasterize(&truth, g);
        let u = pde::solve_forward(&sigma, |x, _| x, SolverOptions::default()).unwrap();
        let direct = interior_data(&sigma, &u).unwrap();
        restricted.sub(&direct).unwrap().norm_max()
    };
    let (d60, d120) = (diff(60), diff(120));
    outcome(
        d60 <= RESTRICTION_RATIO_MAX * d120,
        format!("max-norm difference N=60 {d60:.4}, N=120 {d120:.4}, ratio {:.2}", d60 / d120),
    )
}

fn criterion_10() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = d.path().to_str().unwrap();
        let argv = [
            "cdii", "generate", "--test-case", "2", "--noise", "0.1", "--seed", "7", "--n-fine", "80",
            "--n-coarse", "30", "-o", out,
        ];
        if cli_main(argv) != 0 {
            return outcome(false, "generate exited non-zero".into());
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let identical = names.iter().all(|n| {
        std::fs::read(dirs[0].path().join(n)).ok() == std::fs::read(dirs[1].path().join(n)).ok()
    });
    outcome(identical && names.len() >= 3, format!("{} files compared byte for byte", names.len()))
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut record = |id: usize, o: Outcome| {
        println!("criterion {id:>2} [{}] {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, o));
    };
    record(1, criterion_1());
    record(2, criterion_2());
    record(3, criterion_3());
    record(4, criterion_4());
    let run = tc1_quality_run();
    record(5, criterion_5(&run));
    record(6, criterion_6(&run));
    record(7, criterion_7());
    record(8, criterion_8());
    record(9, criterion_9());
    record(10, criterion_10());

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(id, _)| *id).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
