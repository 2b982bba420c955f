//! The reconstruction objective and its adjoint-based gradient.
//!
//! `Ĵ₁(σ) = Σ_j α_j/2 ‖e^σ|∇u_j| − g_j‖² + β/2 ‖σ‖² + δ/2 ∫ log(1 + |∇σ|²)`
//! is the smooth part, `Ĵ₂(σ) = γ ‖σ‖₁` the non-smooth part. All integrals
//! use the trapezoidal nodal weights of [`Grid::weight`], and gradients are
//! Riesz representers in the matching weighted inner product, so that
//! `⟨∇Ĵ₁, δσ⟩` is the exact directional derivative of the discrete `Ĵ₁`.

use serde::{Deserialize, Serialize};

use crate::error::{CdiiError, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::linalg::{Factorized, SolverOptions, StencilMatrix};
use crate::pde::{self, BoundaryData, ConductivityOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub c_denoise: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            beta: 0.03,
            gamma: 0.3,
            delta: 0.01,
            c_denoise: 0.001,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("c_denoise", self.c_denoise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CdiiError::OutOfRange {
                    key: key.into(),
                    message: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Pointwise bounds on the log-conductivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub sigma_l: f64,
    pub sigma_u: f64,
}

impl Default for BoxBounds {
    fn default() -> Self {
        Self {
            sigma_l: -4.0,
            sigma_u: 4.0,
        }
    }
}

impl BoxBounds {
    pub fn new(sigma_l: f64, sigma_u: f64) -> Result<Self> {
        let b = Self { sigma_l, sigma_u };
        b.validate()?;
        Ok(b)
    }

    /// No effective bounds.
    pub fn unbounded() -> Self {
        Self {
            sigma_l: f64::NEG_INFINITY,
            sigma_u: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_l < 0.0) {
            return Err(CdiiError::OutOfRange {
                key: "sigma_l".into(),
                message: format!("must be negative, got {}", self.sigma_l),
            });
        }
        if !(self.sigma_u > 0.0) {
            return Err(CdiiError::OutOfRange {
                key: "sigma_u".into(),
                message: format!("must be positive, got {}", self.sigma_u),
            });
        }
        Ok(())
    }

    pub fn contains(&self, v: f64) -> bool {
        self.sigma_l <= v && v <= self.sigma_u
    }
}

/// Interior field magnitude `H = e^σ |∇u|`.
pub fn interior_data(sigma: &ScalarField, u: &ScalarField) -> Result<ScalarField> {
    sigma.check_same_grid(u)?;
    let mag = pde::gradient_field(u).magnitude();
    mag.zip_map(sigma, |m, s| s.exp() * m)
}

/// `∫ log(1 + |∇σ|²)` by nodal quadrature.
pub fn pm_energy(sigma: &ScalarField) -> f64 {
    let g = sigma.grid();
    let d = pde::gradient_field(sigma);
    g.nodes()
        .map(|(i, j)| {
            let (gx, gy) = d.at(i, j);
            g.weight(i, j) * (gx * gx + gy * gy).ln_1p()
        })
        .sum()
}

/// Smooth part `Ĵ₁` evaluated from already-solved potentials.
pub fn j1_value(
    sigma: &ScalarField,
    u1: &ScalarField,
    u2: &ScalarField,
    g1: &ScalarField,
    g2: &ScalarField,
    w: &Weights,
) -> Result<f64> {
    let misfit = |u: &ScalarField, g: &ScalarField| -> Result<f64> {
        let r = interior_data(sigma, u)?.sub(g)?;
        Ok(r.dot(&r))
    };
    let mut value = 0.5 * w.alpha1 * misfit(u1, g1)? + 0.5 * w.alpha2 * misfit(u2, g2)?;
    if w.beta != 0.0 {
        value += 0.5 * w.beta * sigma.dot(sigma);
    }
    if w.delta != 0.0 {
        value += 0.5 * w.delta * pm_energy(sigma);
    }
    Ok(value)
}

/// Non-smooth part `Ĵ₂ = γ ‖σ‖₁`.
pub fn j2_value(sigma: &ScalarField, w: &Weights) -> f64 {
    w.gamma * sigma.norm_l1()
}

/// Discrete `∇·(∇σ / (1 + |∇σ|²))`, defined as minus the weighted gradient
/// of `½ ∫ log(1 + |∇σ|²)` so that `−δ · pm_divergence` is exactly the
/// Perona-Malik contribution to `∇Ĵ₁`.
pub fn pm_divergence(sigma: &ScalarField) -> ScalarField {
    let g = *sigma.grid();
    let d = pde::gradient_field(sigma);
    let w = g.weights();
    let mut fx = Vec::with_capacity(g.len());
    let mut fy = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let (gx, gy) = (d.x_comp()[k], d.y_comp()[k]);
        let a = w[k] / (1.0 + gx * gx + gy * gy);
        fx.push(a * gx);
        fy.push(a * gy);
    }
    let t = pde::gradient_transpose(&VectorField::from_raw(g, fx, fy));
    let values = t.values().iter().zip(&w).map(|(v, wk)| -v / wk).collect();
    ScalarField::from_raw(g, values)
}

/// Reduced gradient of `Ĵ₁` assembled from forward states `u_j` and adjoint
/// states `v_j`:
/// `Σ_j [α_j (e^σ|∇u_j| − g_j) e^σ|∇u_j| + e^σ ∇u_j·∇v_j] + βσ − δ ∇·(∇σ/(1+|∇σ|²))`.
#[allow(clippy::too_many_arguments)]
pub fn reduced_gradient(
    sigma: &ScalarField,
    u1: &ScalarField,
    u2: &ScalarField,
    v1: &ScalarField,
    v2: &ScalarField,
    g1: &ScalarField,
    g2: &ScalarField,
    w: &Weights,
) -> Result<ScalarField> {
    let data_term = |u: &ScalarField, g: &ScalarField, alpha: f64| -> Result<ScalarField> {
        let h = interior_data(sigma, u)?;
        h.zip_map(g, |hv, gv| alpha * (hv - gv) * hv)
    };
    let mut grad = data_term(u1, g1, w.alpha1)?
        .add(&data_term(u2, g2, w.alpha2)?)?
        .add(&pde::coefficient_sensitivity(sigma, u1, v1))?
        .add(&pde::coefficient_sensitivity(sigma, u2, v2))?;
    if w.beta != 0.0 {
        grad = grad.axpy(w.beta, sigma)?;
    }
    if w.delta != 0.0 {
        grad = grad.axpy(-w.delta, &pm_divergence(sigma))?;
    }
    Ok(grad)
}

/// The denoising operator `(I − cΔ)⁻¹` with homogeneous Dirichlet boundary,
/// factorized once for a grid and `c`.
#[derive(Debug, Clone)]
pub struct H1Smoother {
    grid: Grid,
    c: f64,
    factor: Option<Factorized>,
}

impl H1Smoother {
    pub fn new(grid: Grid, c: f64, options: SolverOptions) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(CdiiError::OutOfRange {
                key: "c_denoise".into(),
                message: format!("must be non-negative, got {c}"),
            });
        }
        let factor = if c == 0.0 {
            None
        } else {
            let m = grid.n_cells() - 1;
            let s = c / (grid.h() * grid.h());
            let mut east = vec![-s; m * m];
            for (k, e) in east.iter_mut().enumerate() {
                if k % m == m - 1 {
                    *e = 0.0;
                }
            }
            let mut north = vec![-s; m * m];
            north[m * m - m..].iter_mut().for_each(|v| *v = 0.0);
            let matrix = StencilMatrix::new(m, vec![1.0 + 4.0 * s; m * m], east, north);
            Some(Factorized::new(matrix, options)?)
        };
        Ok(Self { grid, c, factor })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn apply(&self, g: &ScalarField) -> Result<ScalarField> {
        if *g.grid() != self.grid {
            return Err(CdiiError::GridMismatch("smoother built for a different grid".into()));
        }
        let Some(factor) = &self.factor else {
            return Ok(g.clone());
        };
        let n = self.grid.n_cells();
        let m = n - 1;
        let mut rhs = vec![0.0; m * m];
        for j in 1..n {
            for i in 1..n {
                rhs[(j - 1) * m + (i - 1)] = g.at(i, j);
            }
        }
        let x = factor.solve(&rhs)?;
        let mut out = vec![0.0; self.grid.len()];
        for j in 1..n {
            for i in 1..n {
                out[self.grid.idx(i, j)] = x[(j - 1) * m + (i - 1)];
            }
        }
        ScalarField::new(self.grid, out)
    }
}

/// One-shot `(I − cΔ)⁻¹ g`.
pub fn h1_smooth(g: &ScalarField, c: f64) -> Result<ScalarField> {
    H1Smoother::new(*g.grid(), c, SolverOptions::default())?.apply(g)
}

/// Interior data for the two boundary conditions.
#[derive(Debug, Clone)]
pub struct Problem {
    pub g1: ScalarField,
    pub g2: ScalarField,
    pub f1: BoundaryData,
    pub f2: BoundaryData,
    pub solver: SolverOptions,
}

/// Forward solution at one `σ`.
#[derive(Debug, Clone)]
pub struct ForwardState {
    pub op: ConductivityOperator,
    pub u1: ScalarField,
    pub u2: ScalarField,
}

impl Problem {
    pub fn new(g1: ScalarField, g2: ScalarField) -> Result<Self> {
        g1.check_same_grid(&g2)?;
        Ok(Self {
            g1,
            g2,
            f1: BoundaryData::x(),
            f2: BoundaryData::y(),
            solver: SolverOptions::default(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.g1.grid()
    }

    pub fn forward(&self, sigma: &ScalarField) -> Result<ForwardState> {
        sigma.check_same_grid(&self.g1)?;
        let op = ConductivityOperator::new(sigma, self.solver)?;
        let (f1, f2) = (self.f1, self.f2);
        let (u1, u2) = pde::join(
            || op.solve_dirichlet(|x, y| f1.eval(x, y)),
            || op.solve_dirichlet(|x, y| f2.eval(x, y)),
        );
        Ok(ForwardState { u1: u1?, u2: u2?, op })
    }

    pub fn j1(&self, sigma: &ScalarField, w: &Weights) -> Result<f64> {
        let st = self.forward(sigma)?;
        j1_value(sigma, &st.u1, &st.u2, &self.g1, &self.g2, w)
    }

    /// `Ĵ₁(σ)` and its reduced gradient.
    pub fn j1_and_gradient(&self, sigma: &ScalarField, w: &Weights) -> Result<(f64, ScalarField)> {
        let st = self.forward(sigma)?;
        let value = j1_value(sigma, &st.u1, &st.u2, &self.g1, &self.g2, w)?;
        let (v1, v2) = pde::join(
            || st.op.solve_adjoint(sigma, &st.u1, &self.g1, w.alpha1),
            || st.op.solve_adjoint(sigma, &st.u2, &self.g2, w.alpha2),
        );
        let grad = reduced_gradient(sigma, &st.u1, &st.u2, &v1?, &v2?, &self.g1, &self.g2, w)?;
        Ok((value, grad))
    }
}
