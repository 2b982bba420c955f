//! Picard-type substitution baseline.
//!
//! Alternates between the two measurements: solve for `u_j` at the current
//! conductivity `a`, then replace `a` by `H_j / |∇u_j|`.

use serde::{Deserialize, Serialize};

use crate::error::{CdiiError, Result};
use crate::grid::ScalarField;
use crate::linalg::SolverOptions;
use crate::pde::{self, BoundaryData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub max_iter: usize,
    /// Stop once `‖a_{k+1} − a_k‖ ≤ tol`.
    pub tol: f64,
    /// Guard on `|∇u|` in the update quotient.
    pub eps_grad: f64,
    /// Replacement for non-positive conductivity values.
    pub floor: f64,
    /// Constant initial conductivity, used when no initial field is given.
    pub initial: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            max_iter: 20,
            tol: 1e-4,
            eps_grad: 1e-8,
            floor: 1e-6,
            initial: 1.0,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| CdiiError::OutOfRange {
            key: key.into(),
            message: message.into(),
        };
        if self.max_iter == 0 {
            return Err(bad("picard_max_iter", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(bad("picard_tol", "must be positive"));
        }
        if !(self.eps_grad > 0.0 && self.floor > 0.0) {
            return Err(bad("picard_eps", "must be positive"));
        }
        if !(self.initial > 0.0 && self.initial.is_finite()) {
            return Err(bad("picard_sigma0", "initial conductivity must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardIterate {
    pub k: usize,
    /// Which measurement drove the update (1 or 2).
    pub data_index: usize,
    /// `‖a_{k+1} − a_k‖`, weighted L² norm.
    pub update: f64,
    /// Nodes clamped to the floor in this update.
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    /// Reconstructed log-conductivity `log a`.
    pub sigma: ScalarField,
    pub conductivity: ScalarField,
    pub history: Vec<PicardIterate>,
    pub converged: bool,
}

/// One substitution step `a ↦ H / max(|∇u|, ε)` with `u` solved at `a`.
/// Returns the new conductivity and the number of clamped nodes.
pub fn picard_step(
    a: &ScalarField,
    h: &ScalarField,
    f: BoundaryData,
    config: &PicardConfig,
    solver: SolverOptions,
) -> Result<(ScalarField, usize)> {
    let u = pde::solve_forward(&a.map(f64::ln), |x, y| f.eval(x, y), solver)?;
    let grad = pde::gradient_field(&u).magnitude();
    let mut clamped = 0;
    let next = h.zip_map(&grad, |hv, gv| hv / gv.max(config.eps_grad))?.map(|v| {
        if v > 0.0 && v.is_finite() {
            v
        } else {
            clamped += 1;
            config.floor
        }
    });
    Ok((next, clamped))
}

/// Runs the substitution iteration from the constant initial conductivity.
pub fn picard_run(
    h1: &ScalarField,
    h2: &ScalarField,
    f1: BoundaryData,
    f2: BoundaryData,
    config: &PicardConfig,
) -> Result<PicardOutcome> {
    let a0 = ScalarField::constant(*h1.grid(), config.initial);
    picard_run_from(h1, h2, f1, f2, config, &a0, SolverOptions::default())
}

pub fn picard_run_from(
    h1: &ScalarField,
    h2: &ScalarField,
    f1: BoundaryData,
    f2: BoundaryData,
    config: &PicardConfig,
    a0: &ScalarField,
    solver: SolverOptions,
) -> Result<PicardOutcome> {
    h1.check_same_grid(h2)?;
    h1.check_same_grid(a0)?;
    if a0.min() <= 0.0 {
        return Err(CdiiError::InvalidInput("initial conductivity must be positive".into()));
    }
    let mut a = a0.clone();
    let mut history = Vec::with_capacity(config.max_iter);
    let mut converged = false;
    for k in 0..config.max_iter {
        let (h, f, data_index) = if k % 2 == 0 { (h1, f1, 1) } else { (h2, f2, 2) };
        let (next, clamped) = picard_step(&a, h, f, config, solver).map_err(|e| e.at_iteration(k))?;
        let update = next.sub(&a)?.norm_l2();
        history.push(PicardIterate {
            k,
            data_index,
            update,
            clamped,
        });
        a = next;
        if update <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(PicardOutcome {
        sigma: a.map(f64::ln),
        conductivity: a,
        history,
        converged,
    })
}
