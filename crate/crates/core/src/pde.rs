//! Cell-nodal finite differences for `-∇·(e^σ ∇u) = s` with Dirichlet data.
//!
//! Face coefficients are `e^{σ_f}` with `σ_f` the mean of the two nodes
//! sharing the face. The discrete operator acts on interior nodes only;
//! boundary values enter the right-hand side.

use serde::{Deserialize, Serialize};

use crate::error::{CdiiError, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::linalg::{Factorized, SolverOptions, StencilMatrix};

/// Guard on `|∇u|` when normalising `∇u / |∇u|`.
pub const EPS_GRAD: f64 = 1e-10;

/// Affine Dirichlet data `f(x, y) = ax·x + ay·y + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub ax: f64,
    pub ay: f64,
    pub c: f64,
}

impl BoundaryData {
    pub const fn x() -> Self {
        Self { ax: 1.0, ay: 0.0, c: 0.0 }
    }

    pub const fn y() -> Self {
        Self { ax: 0.0, ay: 1.0, c: 0.0 }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.ax * x + self.ay * y + self.c
    }
}

/// Interior system `A u = rhs` for one boundary condition.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub grid: Grid,
    pub matrix: StencilMatrix,
    pub rhs: Vec<f64>,
}

#[inline]
fn interior_index(grid: &Grid, i: usize, j: usize) -> usize {
    (j - 1) * (grid.n_cells() - 1) + (i - 1)
}

/// Face coefficients `e^{(σ_a + σ_b)/2}` for the east face (towards `i + 1`)
/// and north face (towards `j + 1`) of every node. Faces leaving the domain
/// hold zero.
#[derive(Debug, Clone)]
struct FaceCoefficients {
    east: Vec<f64>,
    north: Vec<f64>,
}

impl FaceCoefficients {
    fn new(sigma: &ScalarField) -> Self {
        let g = *sigma.grid();
        let n = g.n_cells();
        let mut east = vec![0.0; g.len()];
        let mut north = vec![0.0; g.len()];
        for (i, j) in g.nodes() {
            let k = g.idx(i, j);
            let s = sigma.at(i, j);
            if i < n {
                east[k] = (0.5 * (s + sigma.at(i + 1, j))).exp();
            }
            if j < n {
                north[k] = (0.5 * (s + sigma.at(i, j + 1))).exp();
            }
        }
        Self { east, north }
    }
}

fn check_finite(sigma: &ScalarField) -> Result<()> {
    if let Some(k) = sigma.values().iter().position(|v| !v.is_finite()) {
        return Err(CdiiError::InvalidInput(format!(
            "non-finite log-conductivity at storage index {k}"
        )));
    }
    Ok(())
}

fn assemble_matrix(grid: &Grid, faces: &FaceCoefficients) -> StencilMatrix {
    let n = grid.n_cells();
    let m = n - 1;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut diag = vec![0.0; m * m];
    let mut east = vec![0.0; m * m];
    let mut north = vec![0.0; m * m];
    for j in 1..n {
        for i in 1..n {
            let k = grid.idx(i, j);
            let e = faces.east[k];
            let w = faces.east[grid.idx(i - 1, j)];
            let no = faces.north[k];
            let s = faces.north[grid.idx(i, j - 1)];
            let r = interior_index(grid, i, j);
            diag[r] = (e + w + no + s) * inv_h2;
            if i + 1 < n {
                east[r] = -e * inv_h2;
            }
            if j + 1 < n {
                north[r] = -no * inv_h2;
            }
        }
    }
    StencilMatrix::new(m, diag, east, north)
}

/// Right-hand side contribution of Dirichlet values on the boundary.
fn boundary_rhs(grid: &Grid, faces: &FaceCoefficients, f: &impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = grid.n_cells();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut rhs = vec![0.0; (n - 1) * (n - 1)];
    let fb = |i: usize, j: usize| {
        let (x, y) = grid.point(i, j);
        f(x, y)
    };
    for j in 1..n {
        for i in 1..n {
            let r = interior_index(grid, i, j);
            let mut s = 0.0;
            if i == 1 {
                s += faces.east[grid.idx(0, j)] * fb(0, j);
            }
            if i == n - 1 {
                s += faces.east[grid.idx(n - 1, j)] * fb(n, j);
            }
            if j == 1 {
                s += faces.north[grid.idx(i, 0)] * fb(i, 0);
            }
            if j == n - 1 {
                s += faces.north[grid.idx(i, n - 1)] * fb(i, n);
            }
            rhs[r] = s * inv_h2;
        }
    }
    rhs
}

/// Assembles the cell-nodal system for `-∇·(e^σ ∇u) = 0`, `u = f` on the boundary.
pub fn assemble_forward(sigma: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<LinearSystem> {
    check_finite(sigma)?;
    let grid = *sigma.grid();
    let faces = FaceCoefficients::new(sigma);
    let matrix = assemble_matrix(&grid, &faces);
    let rhs = boundary_rhs(&grid, &faces, &f);
    Ok(LinearSystem { grid, matrix, rhs })
}

/// The discrete operator `-∇·(e^σ ∇·)` for one `σ`, factorized once and
/// reused for every forward and adjoint solve at that `σ`.
#[derive(Debug, Clone)]
pub struct ConductivityOperator {
    grid: Grid,
    faces: FaceCoefficients,
    factor: Factorized,
}

impl ConductivityOperator {
    pub fn new(sigma: &ScalarField, options: SolverOptions) -> Result<Self> {
        check_finite(sigma)?;
        let grid = *sigma.grid();
        let faces = FaceCoefficients::new(sigma);
        let factor = Factorized::new(assemble_matrix(&grid, &faces), options)?;
        Ok(Self { grid, faces, factor })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &StencilMatrix {
        self.factor.matrix()
    }

    /// Solves the homogeneous equation with Dirichlet data `f`.
    pub fn solve_dirichlet(&self, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        let rhs = boundary_rhs(&self.grid, &self.faces, &f);
        let interior = self.factor.solve(&rhs)?;
        let g = self.grid;
        let n = g.n_cells();
        let mut values = vec![0.0; g.len()];
        for (i, j) in g.nodes() {
            values[g.idx(i, j)] = if g.is_boundary(i, j) {
                let (x, y) = g.point(i, j);
                f(x, y)
            } else {
                interior[interior_index(&g, i, j)]
            };
        }
        debug_assert!(n >= 2);
        ScalarField::new(g, values)
    }

    /// Solves `A v = s` at interior nodes with `v = 0` on the boundary.
    /// Boundary entries of `source` are ignored.
    pub fn solve_source(&self, source: &ScalarField) -> Result<ScalarField> {
        let g = self.grid;
        let n = g.n_cells();
        let mut rhs = vec![0.0; (n - 1) * (n - 1)];
        for j in 1..n {
            for i in 1..n {
                rhs[interior_index(&g, i, j)] = source.at(i, j);
            }
        }
        let interior = self.factor.solve(&rhs)?;
        let mut values = vec![0.0; g.len()];
        for j in 1..n {
            for i in 1..n {
                values[g.idx(i, j)] = interior[interior_index(&g, i, j)];
            }
        }
        ScalarField::new(g, values)
    }

    /// Adjoint state for one data term, see [`solve_adjoint`].
    pub fn solve_adjoint(&self, sigma: &ScalarField, u: &ScalarField, g: &ScalarField, alpha: f64) -> Result<ScalarField> {
        let flux = misfit_flux(sigma, u, g, alpha)?;
        self.solve_source(&adjoint_source(&flux))
    }
}

/// Discrete `e^σ ∇u · ∇v`: for each node, the face-weighted products of
/// `u` and `v` differences over the faces touching it, normalised by the
/// node's quadrature weight. This is the exact derivative of `vᵀ A(σ) u` with
/// respect to the nodal value of `σ` (for `v = 0` on the boundary).
pub fn coefficient_sensitivity(sigma: &ScalarField, u: &ScalarField, v: &ScalarField) -> ScalarField {
    let g = *sigma.grid();
    let faces = FaceCoefficients::new(sigma);
    let n = g.n_cells();
    let (uv, vv) = (u.values(), v.values());
    let mut acc = vec![0.0; g.len()];
    for (i, j) in g.nodes() {
        let k = g.idx(i, j);
        if i < n {
            let kk = g.idx(i + 1, j);
            let c = 0.5 * faces.east[k] * (uv[kk] - uv[k]) * (vv[kk] - vv[k]);
            acc[k] += c;
            acc[kk] += c;
        }
        if j < n {
            let kk = g.idx(i, j + 1);
            let c = 0.5 * faces.north[k] * (uv[kk] - uv[k]) * (vv[kk] - vv[k]);
            acc[k] += c;
            acc[kk] += c;
        }
    }
    for (i, j) in g.nodes() {
        acc[g.idx(i, j)] /= g.weight(i, j);
    }
    ScalarField::from_raw(g, acc)
}

/// Potential `u` with `u = f` on the boundary and `-∇·(e^σ ∇u) = 0` inside.
pub fn solve_forward(sigma: &ScalarField, f: impl Fn(f64, f64) -> f64, options: SolverOptions) -> Result<ScalarField> {
    ConductivityOperator::new(sigma, options)?.solve_dirichlet(f)
}

/// Nodal gradient: central differences inside, first-order one-sided
/// differences on the boundary.
pub fn gradient_field(u: &ScalarField) -> VectorField {
    let g = *u.grid();
    let n = g.n_cells();
    let h = g.h();
    let diff = |lo: f64, mid: f64, hi: f64, k: usize| -> f64 {
        if k == 0 {
            (hi - mid) / h
        } else if k == n {
            (mid - lo) / h
        } else {
            (hi - lo) / (2.0 * h)
        }
    };
    let mut gx = vec![0.0; g.len()];
    let mut gy = vec![0.0; g.len()];
    for (i, j) in g.nodes() {
        let k = g.idx(i, j);
        let mid = u.at(i, j);
        let left = if i > 0 { u.at(i - 1, j) } else { mid };
        let right = if i < n { u.at(i + 1, j) } else { mid };
        let down = if j > 0 { u.at(i, j - 1) } else { mid };
        let up = if j < n { u.at(i, j + 1) } else { mid };
        gx[k] = diff(left, mid, right, i);
        gy[k] = diff(down, mid, up, j);
    }
    VectorField::from_raw(g, gx, gy)
}

/// Transpose of [`gradient_field`]: returns `Dᵀ F` with `F` a nodal vector
/// field, so that `Σ_k (D w)_k · F_k = Σ_k w_k (Dᵀ F)_k` for every `w`.
pub fn gradient_transpose(flux: &VectorField) -> ScalarField {
    let g = *flux.grid();
    let n = g.n_cells();
    let h = g.h();
    let mut out = vec![0.0; g.len()];
    let mut scatter = |comp: f64, k: usize, at: &dyn Fn(usize) -> usize| {
        if k == 0 {
            out[at(1)] += comp / h;
            out[at(0)] -= comp / h;
        } else if k == n {
            out[at(n)] += comp / h;
            out[at(n - 1)] -= comp / h;
        } else {
            out[at(k + 1)] += comp / (2.0 * h);
            out[at(k - 1)] -= comp / (2.0 * h);
        }
    };
    for (i, j) in g.nodes() {
        let (fx, fy) = flux.at(i, j);
        scatter(fx, i, &|ii| g.idx(ii, j));
        scatter(fy, j, &|jj| g.idx(i, jj));
    }
    ScalarField::from_raw(g, out)
}

/// Cell average of `∇·F` over the control cell around each interior node,
/// by midpoint quadrature on the four cell edges. Face values of `F` are the
/// means of the two adjacent nodal values. Boundary entries are zero.
pub fn cell_averaged_rhs(flux: &VectorField) -> ScalarField {
    let g = *flux.grid();
    let n = g.n_cells();
    let h = g.h();
    let fx = flux.x_comp();
    let fy = flux.y_comp();
    let mut out = vec![0.0; g.len()];
    for j in 1..n {
        for i in 1..n {
            let k = g.idx(i, j);
            let east = 0.5 * (fx[k] + fx[g.idx(i + 1, j)]);
            let west = 0.5 * (fx[k] + fx[g.idx(i - 1, j)]);
            let north = 0.5 * (fy[k] + fy[g.idx(i, j + 1)]);
            let south = 0.5 * (fy[k] + fy[g.idx(i, j - 1)]);
            out[k] = (east - west) / h + (north - south) / h;
        }
    }
    ScalarField::from_raw(g, out)
}

/// Source term of the adjoint equation `-∇·(e^σ ∇v) = ∇·F`.
///
/// Computed as `-(1/h²) Dᵀ(W F)` with `W` the quadrature weights. On nodes at
/// least two cells from the boundary this equals [`cell_averaged_rhs`]; on
/// the first interior ring it also carries the contribution of the one-sided
/// boundary differences, which makes the resulting gradient the exact
/// derivative of the discrete objective.
pub fn adjoint_source(flux: &VectorField) -> ScalarField {
    let g = *flux.grid();
    let w = ScalarField::from_raw(g, g.weights());
    let h2 = g.h() * g.h();
    gradient_transpose(&flux.scale_by(&w)).scale(-1.0 / h2)
}

/// Data-misfit flux `α e^σ (e^σ|∇u| − g) ∇u / max(|∇u|, ε)`.
pub fn misfit_flux(sigma: &ScalarField, u: &ScalarField, g: &ScalarField, alpha: f64) -> Result<VectorField> {
    sigma.check_same_grid(u)?;
    sigma.check_same_grid(g)?;
    let grid = *sigma.grid();
    let du = gradient_field(u);
    let mut fx = vec![0.0; grid.len()];
    let mut fy = vec![0.0; grid.len()];
    for k in 0..grid.len() {
        let (gx, gy) = (du.x_comp()[k], du.y_comp()[k]);
        let mag = gx.hypot(gy);
        let es = sigma.values()[k].exp();
        let coef = alpha * es * (es * mag - g.values()[k]) / mag.max(EPS_GRAD);
        fx[k] = coef * gx;
        fy[k] = coef * gy;
    }
    VectorField::new(grid, fx, fy)
}

/// Adjoint state `v`: `-∇·(e^σ ∇v) = α ∇·[e^σ (e^σ|∇u| − g) sgn(∇u)]`, `v = 0`
/// on the boundary.
pub fn solve_adjoint(
    sigma: &ScalarField,
    u: &ScalarField,
    g: &ScalarField,
    alpha: f64,
    options: SolverOptions,
) -> Result<ScalarField> {
    ConductivityOperator::new(sigma, options)?.solve_adjoint(sigma, u, g, alpha)
}

/// Number of worker threads allowed by `CDII_THREADS` (default 2).
pub fn thread_budget() -> usize {
    std::env::var("CDII_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(2)
}

/// Runs two independent closures, concurrently when the thread budget allows.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    if thread_budget() < 2 {
        return (a(), b());
    }
    std::thread::scope(|s| {
        let hb = s.spawn(b);
        let ra = a();
        (ra, hb.join().expect("solver thread panicked"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> Grid {
        Grid::unit(n).unwrap()
    }

    #[test]
    fn zero_sigma_gives_plain_laplacian_rows() {
        let g = grid(6);
        let sys = assemble_forward(&ScalarField::zeros(g), |x, _| x).unwrap();
        let h2 = g.h() * g.h();
        let m = &sys.matrix;
        for r in 0..m.dim() {
            assert_abs_diff_eq!(m.get(r, r), 4.0 / h2, epsilon = 1e-12);
            let i = r % m.side();
            if i + 1 < m.side() {
                assert_abs_diff_eq!(m.get(r, r + 1), -1.0 / h2, epsilon = 1e-12);
            }
            if r + m.side() < m.dim() {
                assert_abs_diff_eq!(m.get(r, r + m.side()), -1.0 / h2, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn constant_sigma_scales_weights() {
        let g = grid(5);
        let a0 = assemble_forward(&ScalarField::zeros(g), |x, y| x + 2.0 * y).unwrap();
        let c: f64 = 0.7;
        let ac = assemble_forward(&ScalarField::constant(g, c), |x, y| x + 2.0 * y).unwrap();
        for r in 0..a0.matrix.dim() {
            for s in 0..a0.matrix.dim() {
                assert_abs_diff_eq!(ac.matrix.get(r, s), c.exp() * a0.matrix.get(r, s), epsilon = 1e-10);
            }
            assert_abs_diff_eq!(ac.rhs[r], c.exp() * a0.rhs[r], epsilon = 1e-10);
        }
    }

    #[test]
    fn disk_rows_match_hand_evaluation() {
        // On N = 4 no node falls inside the radius-0.25 disk about (0.25, 0.25),
        // so the disk is centred on the node (0.5, 0.5) instead.
        let g = grid(4);
        let sigma = ScalarField::from_fn(g, |x, y| {
            if (x - 0.5).powi(2) + (y - 0.5).powi(2) <= 0.25f64.powi(2) {
                1.0
            } else {
                0.0
            }
        });
        assert_eq!(sigma.at(3, 3), 1.0);
        let sys = assemble_forward(&sigma, |x, _| x).unwrap();
        let h2 = 0.25;
        let e_half = 0.5f64.exp();
        // interior node (3,3) -> row (2,2) in the 3x3 block, index 8
        let r = 8;
        // all four faces of (3,3) touch a zero neighbour: each e^{1/2}
        assert_abs_diff_eq!(sys.matrix.get(r, r), 4.0 * e_half / h2, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.matrix.get(r, 7), -e_half / h2, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.matrix.get(r, 5), -e_half / h2, epsilon = 1e-12);
        // boundary neighbours (4,3) with f = 1 and (3,4) with f = 0.5
        assert_abs_diff_eq!(sys.rhs[r], e_half * (1.0 + 0.5) / h2, epsilon = 1e-12);
        // node (2,2) at the origin has no disk neighbour
        assert_abs_diff_eq!(sys.matrix.get(4, 4), 4.0 / h2, epsilon = 1e-12);
        // node (2,3): east neighbour (3,3) is in the disk
        assert_abs_diff_eq!(sys.matrix.get(7, 7), (3.0 + e_half) / h2, epsilon = 1e-12);
    }

    #[test]
    fn linear_data_is_reproduced_exactly() {
        for (f, exact) in [
            (BoundaryData::x(), (|x: f64, _y: f64| x) as fn(f64, f64) -> f64),
            (BoundaryData::y(), |_x, y| y),
        ] {
            let g = grid(20);
            let u = solve_forward(&ScalarField::zeros(g), |x, y| f.eval(x, y), SolverOptions::default()).unwrap();
            for (i, j) in g.nodes() {
                let (x, y) = g.point(i, j);
                assert_abs_diff_eq!(u.at(i, j), exact(x, y), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn gradient_field_examples() {
        let g = grid(10);
        let d = gradient_field(&ScalarField::from_fn(g, |x, _| x));
        assert!(d.x_comp().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(d.y_comp().iter().all(|v| v.abs() < 1e-12));
        let d = gradient_field(&ScalarField::constant(g, 3.0));
        assert!(d.magnitude().norm_max() == 0.0);
        let d = gradient_field(&ScalarField::from_fn(g, |x, _| x * x));
        for j in 0..=10 {
            for i in 1..10 {
                let (x, _) = g.point(i, j);
                assert_abs_diff_eq!(d.at(i, j).0, 2.0 * x, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cell_averaged_rhs_examples() {
        let g = grid(8);
        let c = cell_averaged_rhs(&VectorField::from_fn(g, |_, _| (2.0, -3.0)));
        assert!(c.norm_max() < 1e-12);
        let c = cell_averaged_rhs(&VectorField::from_fn(g, |x, _| (x, 0.0)));
        let q = cell_averaged_rhs(&VectorField::from_fn(g, |x, y| (x * x, y * y)));
        for (i, j) in g.nodes() {
            if g.is_boundary(i, j) {
                assert_eq!(c.at(i, j), 0.0);
            } else {
                let (x, y) = g.point(i, j);
                assert_abs_diff_eq!(c.at(i, j), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(q.at(i, j), 2.0 * x + 2.0 * y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transpose_identity() {
        let g = grid(7);
        let w = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() + y * y);
        let f = VectorField::from_fn(g, |x, y| (x * y + 0.3, (2.0 * y).cos() - x));
        let dw = gradient_field(&w);
        let lhs: f64 = (0..g.len())
            .map(|k| dw.x_comp()[k] * f.x_comp()[k] + dw.y_comp()[k] * f.y_comp()[k])
            .sum();
        let dtf = gradient_transpose(&f);
        let rhs: f64 = w.values().iter().zip(dtf.values()).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn adjoint_source_matches_cell_average_away_from_boundary() {
        let g = grid(12);
        let f = VectorField::from_fn(g, |x, y| ((x * 2.0).sin() * y, x.exp() - y));
        let a = adjoint_source(&f);
        let c = cell_averaged_rhs(&f);
        for j in 2..=10 {
            for i in 2..=10 {
                assert_abs_diff_eq!(a.at(i, j), c.at(i, j), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_misfit_gives_zero_adjoint() {
        let g = grid(12);
        let sigma = ScalarField::from_fn(g, |x, y| 0.3 * (x * y).sin());
        let op = ConductivityOperator::new(&sigma, SolverOptions::default()).unwrap();
        let u = op.solve_dirichlet(|x, _| x).unwrap();
        let data = crate::objective::interior_data(&sigma, &u).unwrap();
        let v = op.solve_adjoint(&sigma, &u, &data, 1.0).unwrap();
        assert!(v.norm_max() < 1e-12);
        let v = op.solve_adjoint(&sigma, &u, &ScalarField::zeros(g), 0.0).unwrap();
        assert_eq!(v.norm_max(), 0.0);
    }

    #[test]
    fn non_finite_sigma_rejected() {
        let g = grid(3);
        let mut vals = vec![0.0; g.len()];
        vals[5] = f64::INFINITY;
        let sigma = ScalarField::from_raw(g, vals);
        assert!(matches!(assemble_forward(&sigma, |x, _| x), Err(CdiiError::InvalidInput(_))));
    }
}
