//! Variable inertial proximal (VIP) iteration for `min Ĵ₁(σ) + γ‖σ‖₁` over
//! box-constrained `σ`.
//!
//! Each step takes an `H¹`-smoothed gradient step with inertia
//! `θ(σ_k − σ_{k−1})`, then applies box-projected soft thresholding. The step
//! size `s = c₁(1 − θ)/(L + 2c₂)` follows a backtracked Lipschitz estimate
//! `L`. Progress is measured by the complementarity residual `E(σ, μ)`.

use serde::{Deserialize, Serialize};

use crate::error::{CdiiError, Result};
use crate::grid::ScalarField;
use crate::objective::{j2_value, BoxBounds, H1Smoother, Problem, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VipConfig {
    /// Inertial parameter.
    pub theta: f64,
    pub c1: f64,
    pub c2: f64,
    /// Growth factor of `L` during backtracking.
    pub n_backtrack: f64,
    /// Initial Lipschitz estimate.
    pub l0: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Cap on backtracking increases per iteration.
    pub max_backtrack: usize,
    /// Parameter `k` of the complementarity function.
    pub k_param: f64,
    pub weights: Weights,
    pub bounds: BoxBounds,
}

impl Default for VipConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            c1: 1.9,
            c2: 0.001,
            n_backtrack: 2.0,
            l0: 1.0,
            tol: 1e-4,
            max_iter: 20,
            max_backtrack: 60,
            k_param: 1.0,
            weights: Weights::default(),
            bounds: BoxBounds::default(),
        }
    }
}

impl VipConfig {
    /// Checks the parameter ranges for which the scheme converges.
    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, ok: bool, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(CdiiError::OutOfRange {
                    key: key.into(),
                    message: msg.into(),
                })
            }
        };
        range("theta", (0.0..1.0).contains(&self.theta), "must lie in [0, 1)")?;
        range("c1", self.c1 > 0.0 && self.c1 < 2.0, "must lie in (0, 2)")?;
        range("c2", self.c2 > 0.0, "must be positive")?;
        range("n_backtrack", self.n_backtrack > 1.0, "must exceed 1")?;
        range("l0", self.l0 > 0.0 && self.l0.is_finite(), "must be positive")?;
        range("tol", self.tol > 0.0, "must be positive")?;
        range("max_iter", self.max_iter >= 1, "must be at least 1")?;
        range("k_param", self.k_param > 0.0, "must be positive")?;
        self.weights.validate()?;
        range("gamma", self.weights.gamma > 0.0, "must be positive")?;
        self.bounds.validate()
    }

    /// `c₁(1 − θ)/(L + 2c₂)`.
    pub fn step_for(&self, lipschitz: f64) -> f64 {
        self.c1 * (1.0 - self.theta) / (lipschitz + 2.0 * self.c2)
    }
}

/// Projected soft thresholding of a single value.
#[inline]
pub fn soft_threshold_scalar(v: f64, tau: f64, bounds: &BoxBounds) -> f64 {
    if v > tau {
        (v - tau).min(bounds.sigma_u)
    } else if v < -tau {
        (v + tau).max(bounds.sigma_l)
    } else {
        0.0
    }
}

/// Minimiser of `τ‖σ‖₁ + ½‖σ − v‖²` over `σ_l ≤ σ ≤ σ_u`, pointwise.
pub fn soft_threshold(v: &ScalarField, tau: f64, bounds: &BoxBounds) -> ScalarField {
    debug_assert!(tau >= 0.0);
    v.map(|x| soft_threshold_scalar(x, tau, bounds))
}

/// Complementarity function `E(σ, μ)` at one node.
#[inline]
pub fn complementarity_scalar(sigma: f64, mu: f64, gamma: f64, k: f64, bounds: &BoxBounds) -> f64 {
    sigma - (sigma + k * (mu - gamma)).max(0.0) + (sigma - bounds.sigma_u + k * (mu - gamma)).max(0.0)
        - (sigma + k * (mu + gamma)).min(0.0)
        + (sigma - bounds.sigma_l + k * (mu + gamma)).min(0.0)
}

/// Pointwise complementarity residual; zero exactly where `(σ, μ)` satisfy
/// the sparsity and box complementarity conditions.
pub fn complementarity_e(
    sigma: &ScalarField,
    mu: &ScalarField,
    gamma: f64,
    k: f64,
    bounds: &BoxBounds,
) -> Result<ScalarField> {
    sigma.zip_map(mu, |s, m| complementarity_scalar(s, m, gamma, k, bounds))
}

/// Multipliers for the L¹ term and the lower/upper bounds.
///
/// `λ + λ_u − λ_l = μ` holds for `μ ≥ 0` only; for `μ < 0` the L¹
/// multiplier is clamped at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierTriple {
    pub lambda: ScalarField,
    pub lambda_l: ScalarField,
    pub lambda_u: ScalarField,
}

pub fn multipliers(mu: &ScalarField, gamma: f64) -> MultiplierTriple {
    MultiplierTriple {
        lambda: mu.map(|m| gamma.min(m.max(0.0))),
        lambda_l: mu.map(|m| -(m + gamma).min(0.0)),
        lambda_u: mu.map(|m| (m - gamma).max(0.0)),
    }
}

/// Relative slack in the backtracking acceptance test.
pub const MAJORIZATION_SLACK: f64 = 1e-13;

/// Outcome of one backtracking search.
#[derive(Debug, Clone)]
pub struct Backtrack {
    pub lipschitz: f64,
    pub step: f64,
    pub sigma_trial: ScalarField,
    /// `Ĵ₁(σ̃)`.
    pub j1_trial: f64,
    /// Right-hand side of the accepted majorization test.
    pub bound: f64,
    /// Number of increases of `L` before acceptance.
    pub increases: usize,
}

/// Proximal step `S_{γs}(σ_k − s·g_s + θ(σ_k − σ_{k−1}))`.
pub fn proximal_step(
    sigma_k: &ScalarField,
    sigma_prev: &ScalarField,
    grad_smooth: &ScalarField,
    step: f64,
    config: &VipConfig,
) -> Result<ScalarField> {
    let theta = config.theta;
    let arg = sigma_k
        .axpy(-step, grad_smooth)?
        .zip_map(&sigma_k.sub(sigma_prev)?, |a, d| a + theta * d)?;
    // a negative step only arises for θ ≥ 1; thresholding is then switched off
    let tau = (config.weights.gamma * step).max(0.0);
    Ok(soft_threshold(&arg, tau, &config.bounds))
}

/// Smallest `L̃ = nⁱ L_prev` whose proximal step satisfies
/// `Ĵ₁(σ̃) ≤ Ĵ₁(σ_k) + ⟨∇Ĵ₁(σ_k), σ̃ − σ_k⟩ + (L̃/2)‖σ̃ − σ_k‖²`.
///
/// The majorization uses the plain gradient `grad`; the step uses the
/// smoothed `grad_smooth`.
#[allow(clippy::too_many_arguments)]
pub fn backtrack(
    j1: impl Fn(&ScalarField) -> Result<f64>,
    sigma_k: &ScalarField,
    sigma_prev: &ScalarField,
    j1_k: f64,
    grad: &ScalarField,
    grad_smooth: &ScalarField,
    l_prev: f64,
    config: &VipConfig,
    iteration: usize,
) -> Result<Backtrack> {
    let mut lipschitz = l_prev;
    for increases in 0..=config.max_backtrack {
        let step = config.step_for(lipschitz);
        let trial = proximal_step(sigma_k, sigma_prev, grad_smooth, step, config)?;
        let d = trial.sub(sigma_k)?;
        let bound = j1_k + grad.dot(&d) + 0.5 * lipschitz * d.dot(&d);
        let value = j1(&trial)?;
        // round-off slack: near stationarity both sides agree to machine precision
        if value <= bound + MAJORIZATION_SLACK * j1_k.abs() {
            return Ok(Backtrack {
                lipschitz,
                step,
                sigma_trial: trial,
                j1_trial: value,
                bound,
                increases,
            });
        }
        lipschitz *= config.n_backtrack;
    }
    Err(CdiiError::LineSearchFailure {
        iteration,
        attempts: config.max_backtrack,
    })
}

/// Per-iteration record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VipIterate {
    pub k: usize,
    /// `Ĵ₁(σ_k)`.
    pub j1: f64,
    /// `Ĵ₂(σ_k)`.
    pub j2: f64,
    pub lipschitz: f64,
    pub step: f64,
    /// `‖E_k‖`, weighted L² norm.
    pub residual: f64,
    pub backtracks: usize,
    /// `Ĵ₁(σ_{k+1})`, the left side of the accepted majorization test.
    pub j1_next: f64,
    /// Right side of the accepted majorization test.
    pub majorant: f64,
}

#[derive(Debug, Clone)]
pub struct VipOutcome {
    pub sigma: ScalarField,
    pub history: Vec<VipIterate>,
    pub converged: bool,
}

/// Runs the VIP scheme from `sigma0` until `‖E_k‖ ≤ tol` or `max_iter`.
///
/// `config` is not range-checked here, so parameter studies can step outside
/// the convergent region; [`VipConfig::validate`] enforces it for user input.
pub fn vip_run(problem: &Problem, config: &VipConfig, sigma0: &ScalarField) -> Result<VipOutcome> {
    vip_run_with(problem, config, sigma0, |_, _| {})
}

/// [`vip_run`] with a callback invoked after every iteration.
pub fn vip_run_with(
    problem: &Problem,
    config: &VipConfig,
    sigma0: &ScalarField,
    mut on_iter: impl FnMut(&VipIterate, &ScalarField),
) -> Result<VipOutcome> {
    sigma0.check_same_grid(&problem.g1)?;
    if let Some(v) = sigma0.values().iter().find(|v| !config.bounds.contains(**v)) {
        return Err(CdiiError::InvalidInput(format!(
            "initial guess value {v} outside bounds [{}, {}]",
            config.bounds.sigma_l, config.bounds.sigma_u
        )));
    }
    if !(config.n_backtrack > 1.0 && config.l0 > 0.0) {
        return Err(CdiiError::InvalidInput("backtracking needs n > 1 and L0 > 0".into()));
    }
    let w = config.weights;
    let smoother = H1Smoother::new(*problem.grid(), w.c_denoise, problem.solver)?;
    let j1 = |s: &ScalarField| problem.j1(s, &w);

    let mut sigma = sigma0.clone();
    let mut sigma_prev = sigma0.clone();
    let mut lipschitz = config.l0;
    let mut history = Vec::with_capacity(config.max_iter);
    let mut converged = false;

    for k in 0..config.max_iter {
        let (j1_k, grad) = problem.j1_and_gradient(&sigma, &w).map_err(|e| e.at_iteration(k))?;
        let grad_smooth = smoother.apply(&grad).map_err(|e| e.at_iteration(k))?;
        let bt = backtrack(j1, &sigma, &sigma_prev, j1_k, &grad, &grad_smooth, lipschitz, config, k)
            .map_err(|e| e.at_iteration(k))?;
        lipschitz = bt.lipschitz;

        // μ_k = −βσ_k − (∇Ĵ₁)_{H¹}(σ_k)
        let mu = sigma.scale(-w.beta).sub(&grad_smooth)?;
        let residual = complementarity_e(&sigma, &mu, w.gamma, config.k_param, &config.bounds)?.norm_l2();

        let record = VipIterate {
            k,
            j1: j1_k,
            j2: j2_value(&sigma, &w),
            lipschitz,
            step: bt.step,
            residual,
            backtracks: bt.increases,
            j1_next: bt.j1_trial,
            majorant: bt.bound,
        };
        on_iter(&record, &bt.sigma_trial);
        history.push(record);

        sigma_prev = std::mem::replace(&mut sigma, bt.sigma_trial);
        if residual <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(VipOutcome {
        sigma,
        history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    fn bounds4() -> BoxBounds {
        BoxBounds::new(-4.0, 4.0).unwrap()
    }

    #[test]
    fn soft_threshold_branches() {
        let b = bounds4();
        assert_eq!(soft_threshold_scalar(0.0, 0.7, &b), 0.0);
        assert!((soft_threshold_scalar(0.5, 0.2, &b) - 0.3).abs() < 1e-15);
        assert!((soft_threshold_scalar(-0.5, 0.2, &b) + 0.3).abs() < 1e-15);
        assert_eq!(soft_threshold_scalar(10.0, 0.2, &b), 4.0);
        assert_eq!(soft_threshold_scalar(-10.0, 0.2, &b), -4.0);
        assert_eq!(soft_threshold_scalar(0.2, 0.2, &b), 0.0);
    }

    #[test]
    fn complementarity_examples() {
        let b = bounds4();
        assert_eq!(complementarity_scalar(0.0, 0.1, 0.3, 1.0, &b), 0.0);
        assert!(complementarity_scalar(0.5, 0.3, 0.3, 1.0, &b).abs() < 1e-15);
        assert!((complementarity_scalar(0.5, 0.1, 0.3, 1.0, &b) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn multiplier_examples() {
        let g = Grid::unit(3).unwrap();
        let gamma = 0.3;
        let m = multipliers(&ScalarField::zeros(g), gamma);
        assert_eq!(m.lambda.norm_max() + m.lambda_l.norm_max() + m.lambda_u.norm_max(), 0.0);
        let m = multipliers(&ScalarField::constant(g, 2.0 * gamma), gamma);
        assert!(m.lambda.values().iter().all(|&v| v == gamma));
        assert!(m.lambda_l.values().iter().all(|&v| v == 0.0));
        assert!(m.lambda_u.values().iter().all(|&v| (v - gamma).abs() < 1e-15));
        let m = multipliers(&ScalarField::constant(g, -2.0 * gamma), gamma);
        assert!(m.lambda.values().iter().all(|&v| v == 0.0));
        assert!(m.lambda_l.values().iter().all(|&v| (v - gamma).abs() < 1e-15));
        assert!(m.lambda_u.values().iter().all(|&v| v == 0.0));
    }

    fn quadratic_config(l0: f64) -> VipConfig {
        VipConfig {
            theta: 0.0,
            c1: 1.0,
            c2: 0.0,
            l0,
            weights: Weights {
                gamma: 0.0,
                c_denoise: 0.0,
                ..Weights::default()
            },
            bounds: BoxBounds::unbounded(),
            ..VipConfig::default()
        }
    }

    #[test]
    fn backtracking_on_unit_quadratic() {
        // ĵ(σ) = ½‖σ‖², ∇ĵ = σ, Lipschitz constant 1
        let g = Grid::unit(6).unwrap();
        let sigma = ScalarField::from_fn(g, |x, y| x - 0.5 * y + 0.25);
        let j = |s: &ScalarField| Ok(0.5 * s.dot(s));
        let j0 = j(&sigma).unwrap();

        let cfg = quadratic_config(1.0);
        let bt = backtrack(j, &sigma, &sigma, j0, &sigma, &sigma, cfg.l0, &cfg, 0).unwrap();
        assert_eq!(bt.increases, 0);
        assert_eq!(bt.lipschitz, 1.0);

        // L = 1/4 gives 9ĵ against −3ĵ, L = 1/2 gives ĵ against −ĵ, L = 1 gives 0 ≤ 0

        let cfg = quadratic_config(0.25);
        let bt = backtrack(j, &sigma, &sigma, j0, &sigma, &sigma, cfg.l0, &cfg, 0).unwrap();
        assert_eq!(bt.increases, 2);
        assert_eq!(bt.lipschitz, 1.0);
    }

    #[test]
    fn backtracking_cap_reports_failure() {
        let g = Grid::unit(4).unwrap();
        let sigma = ScalarField::constant(g, 1.0);
        let cfg = VipConfig {
            max_backtrack: 3,
            ..quadratic_config(1.0)
        };
        // objective that never satisfies the majorization
        let j = |_: &ScalarField| Ok(f64::INFINITY);
        match backtrack(j, &sigma, &sigma, 0.0, &sigma, &sigma, 1.0, &cfg, 5) {
            Err(CdiiError::LineSearchFailure { iteration, attempts }) => {
                assert_eq!((iteration, attempts), (5, 3));
            }
            other => panic!("expected line-search failure, got {other:?}"),
        }
    }

    #[test]
    fn default_config_matches_reference_values() {
        let c = VipConfig::default();
        assert_eq!((c.theta, c.c1, c.c2, c.tol, c.max_iter), (0.5, 1.9, 0.001, 1e-4, 20));
        c.validate().unwrap();
        assert!(VipConfig { theta: 1.5, ..c }.validate().is_err());
        assert!(VipConfig { c1: 2.0, ..c }.validate().is_err());
        assert!(VipConfig { n_backtrack: 1.0, ..c }.validate().is_err());
    }

    proptest! {
        #[test]
        fn soft_threshold_nonexpansive(v in -10.0f64..10.0, w in -10.0f64..10.0, tau in 0.0f64..3.0) {
            let b = bounds4();
            let d = (soft_threshold_scalar(v, tau, &b) - soft_threshold_scalar(w, tau, &b)).abs();
            prop_assert!(d <= (v - w).abs() + 1e-15);
            let s = soft_threshold_scalar(v, tau, &b);
            prop_assert!(b.contains(s));
        }

        #[test]
        fn zero_threshold_unbounded_is_identity(v in -1e6f64..1e6) {
            prop_assert_eq!(soft_threshold_scalar(v, 0.0, &BoxBounds::unbounded()), v);
        }

        #[test]
        fn multipliers_recombine_for_nonnegative_mu(m in 0.0f64..5.0, gamma in 0.01f64..2.0) {
            let g = Grid::unit(2).unwrap();
            let t = multipliers(&ScalarField::constant(g, m), gamma);
            let back = t.lambda.values()[0] + t.lambda_u.values()[0] - t.lambda_l.values()[0];
            prop_assert!((back - m).abs() <= 1e-12 * (1.0 + m.abs()));
            prop_assert!(t.lambda.values()[0] >= 0.0 && t.lambda.values()[0] <= gamma);
        }
    }
}
