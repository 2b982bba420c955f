//! Sparse symmetric five-point systems on the interior nodes and the two
//! solvers behind them: a banded Cholesky factorization for moderate grids
//! and Jacobi-preconditioned conjugate gradients for large ones.

use crate::error::{CdiiError, Result};

/// Symmetric five-point matrix over an `n × n` block of interior unknowns,
/// ordered with the first index fastest.
///
/// Only the diagonal and the couplings to the east (`k + 1`) and north
/// (`k + n`) neighbours are stored; symmetry supplies the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilMatrix {
    n: usize,
    diag: Vec<f64>,
    east: Vec<f64>,
    north: Vec<f64>,
}

impl StencilMatrix {
    pub(crate) fn new(n: usize, diag: Vec<f64>, east: Vec<f64>, north: Vec<f64>) -> Self {
        debug_assert_eq!(diag.len(), n * n);
        debug_assert_eq!(east.len(), n * n);
        debug_assert_eq!(north.len(), n * n);
        Self { n, diag, east, north }
    }

    /// Unknowns per direction.
    pub fn side(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    /// Entry `A[row, col]`, zero outside the stencil.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (lo, hi) = if row <= col { (row, col) } else { (col, row) };
        match hi - lo {
            0 => self.diag[lo],
            1 if lo % self.n + 1 < self.n => self.east[lo],
            d if d == self.n => self.north[lo],
            _ => 0.0,
        }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for k in 0..self.dim() {
            let mut s = self.diag[k] * x[k];
            let i = k % n;
            if i + 1 < n {
                s += self.east[k] * x[k + 1];
            }
            if i > 0 {
                s += self.east[k - 1] * x[k - 1];
            }
            if k + n < self.dim() {
                s += self.north[k] * x[k + n];
            }
            if k >= n {
                s += self.north[k - n] * x[k - n];
            }
            y[k] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Direct factorization up to [`DIRECT_SIDE_LIMIT`] unknowns per side,
    /// conjugate gradients beyond.
    #[default]
    Auto,
    Direct,
    ConjugateGradient,
}

/// Largest interior side length solved by banded Cholesky under `Auto`.
pub const DIRECT_SIDE_LIMIT: usize = 199;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required relative residual `‖b − A x‖ / ‖b‖`.
    pub rel_tol: f64,
    /// Iteration cap for conjugate gradients; `0` means `10 · dim`.
    pub max_iter: usize,
    pub method: SolverMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 0,
            method: SolverMethod::Auto,
        }
    }
}

/// A matrix prepared for repeated solves.
#[derive(Debug, Clone)]
pub struct Factorized {
    matrix: StencilMatrix,
    kind: FactorKind,
    options: SolverOptions,
}

#[derive(Debug, Clone)]
enum FactorKind {
    Cholesky(BandCholesky),
    Jacobi(Vec<f64>),
}

impl Factorized {
    pub fn new(matrix: StencilMatrix, options: SolverOptions) -> Result<Self> {
        let direct = match options.method {
            SolverMethod::Direct => true,
            SolverMethod::ConjugateGradient => false,
            SolverMethod::Auto => matrix.side() <= DIRECT_SIDE_LIMIT,
        };
        let kind = if direct {
            FactorKind::Cholesky(BandCholesky::factor(&matrix)?)
        } else {
            if let Some(k) = matrix.diag.iter().position(|&d| !(d > 0.0)) {
                return Err(CdiiError::InvalidInput(format!(
                    "non-positive diagonal entry {} in row {k}",
                    matrix.diag[k]
                )));
            }
            FactorKind::Jacobi(matrix.diag.iter().map(|d| 1.0 / d).collect())
        };
        Ok(Self {
            matrix,
            kind,
            options,
        })
    }

    pub fn matrix(&self) -> &StencilMatrix {
        &self.matrix
    }

    /// Solves `A x = b` to the configured relative residual.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let dim = self.matrix.dim();
        debug_assert_eq!(b.len(), dim);
        let b_norm = norm(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; dim]);
        }
        match &self.kind {
            FactorKind::Cholesky(chol) => {
                let mut x = chol.solve(b);
                let mut r = self.residual(b, &x);
                // a couple of refinement sweeps absorb round-off on stiff systems
                for _ in 0..3 {
                    if norm(&r) <= self.options.rel_tol * b_norm {
                        break;
                    }
                    let dx = chol.solve(&r);
                    x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
                    r = self.residual(b, &x);
                }
                let rel = norm(&r) / b_norm;
                if rel > self.options.rel_tol {
                    return Err(CdiiError::SolverFailure {
                        iterations: 0,
                        residual: rel,
                    });
                }
                Ok(x)
            }
            FactorKind::Jacobi(inv_diag) => {
                let max_iter = if self.options.max_iter == 0 {
                    10 * dim
                } else {
                    self.options.max_iter
                };
                pcg(&self.matrix, inv_diag, b, self.options.rel_tol, max_iter)
            }
        }
    }

    fn residual(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        let ax = self.matrix.mul(x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky factor `L` of a banded SPD matrix, row-wise band storage.
#[derive(Debug, Clone)]
struct BandCholesky {
    dim: usize,
    bw: usize,
    // row k holds L[k, k - bw ..= k] at offsets 0..=bw
    band: Vec<f64>,
}

impl BandCholesky {
    fn factor(a: &StencilMatrix) -> Result<Self> {
        let dim = a.dim();
        let bw = a.side();
        let width = bw + 1;
        let mut band = vec![0.0; dim * width];
        for k in 0..dim {
            let first = k.saturating_sub(bw);
            for col in first..=k {
                let mut s = a.get(k, col);
                let t0 = first.max(col.saturating_sub(bw));
                if t0 < col {
                    let rk = k * width + (t0 + bw - k);
                    let rc = col * width + (t0 + bw - col);
                    let len = col - t0;
                    s -= dot(&band[rk..rk + len], &band[rc..rc + len]);
                }
                if col == k {
                    if !(s > 0.0) {
                        return Err(CdiiError::InvalidInput(format!(
                            "matrix is not positive definite (pivot {s:.3e} in row {k})"
                        )));
                    }
                    band[k * width + bw] = s.sqrt();
                } else {
                    band[k * width + (col + bw - k)] = s / band[col * width + bw];
                }
            }
        }
        Ok(Self { dim, bw, band })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let width = self.bw + 1;
        let mut y = b.to_vec();
        for k in 0..self.dim {
            let first = k.saturating_sub(self.bw);
            let row = &self.band[k * width..(k + 1) * width];
            let s: f64 = (first..k).map(|t| row[t + self.bw - k] * y[t]).sum();
            y[k] = (y[k] - s) / row[self.bw];
        }
        for k in (0..self.dim).rev() {
            y[k] /= self.band[k * width + self.bw];
            let yk = y[k];
            let first = k.saturating_sub(self.bw);
            let row = &self.band[k * width..(k + 1) * width];
            for t in first..k {
                y[t] -= row[t + self.bw - k] * yk;
            }
        }
        y
    }
}

fn pcg(a: &StencilMatrix, inv_diag: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let dim = a.dim();
    let b_norm = norm(b);
    let mut x = vec![0.0; dim];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; dim];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        a.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..dim {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if norm(&r) <= tol * b_norm {
            // confirm against the true residual, the recurrence drifts
            let ax = a.mul(&x);
            let true_res = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt();
            if true_res <= tol * b_norm {
                return Ok(x);
            }
            r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            if it + 1 == max_iter {
                break;
            }
        }
        for k in 0..dim {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..dim {
            p[k] = z[k] + beta * p[k];
        }
    }
    let ax = a.mul(&x);
    let res = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt();
    Err(CdiiError::SolverFailure {
        iterations: max_iter,
        residual: res / b_norm,
    })
}
