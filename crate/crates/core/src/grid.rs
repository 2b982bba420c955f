//! Uniform square grids and the nodal fields that live on them.
//!
//! Nodes are `(a + i h, a + j h)` for `i, j in 0..=N`, stored row-major with
//! `x` varying fastest: node `(i, j)` sits at index `j * (N + 1) + i`.

use serde::{Deserialize, Serialize};

use crate::error::{CdiiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_cells: usize,
    a: f64,
    b: f64,
}

impl Grid {
    /// Grid on `(a, b)²` with `n_cells` cells per direction.
    pub fn new(n_cells: usize, a: f64, b: f64) -> Result<Self> {
        if n_cells < 2 {
            return Err(CdiiError::InvalidInput(format!(
                "grid needs at least 2 cells per direction, got {n_cells}"
            )));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(CdiiError::InvalidInput(format!(
                "grid bounds must satisfy a < b, got a={a}, b={b}"
            )));
        }
        Ok(Self { n_cells, a, b })
    }

    /// Grid on the reference domain `(-1, 1)²`.
    pub fn unit(n_cells: usize) -> Result<Self> {
        Self::new(n_cells, -1.0, 1.0)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n_cells as f64
    }

    /// Nodes per direction, `N + 1`.
    pub fn side(&self) -> usize {
        self.n_cells + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.side() + i
    }

    #[inline]
    pub fn coord(&self, k: usize) -> f64 {
        if k == self.n_cells {
            self.b
        } else {
            self.a + k as f64 * self.h()
        }
    }

    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (self.coord(i), self.coord(j))
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n_cells || j == self.n_cells
    }

    /// Trapezoidal quadrature weight of node `(i, j)`: `h²` inside, half on
    /// edges, a quarter at corners.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let end = |k: usize| if k == 0 || k == self.n_cells { 0.5 } else { 1.0 };
        let h = self.h();
        h * h * end(i) * end(j)
    }

    /// Quadrature weights for every node, in storage order.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len());
        for j in 0..self.side() {
            for i in 0..self.side() {
                w.push(self.weight(i, j));
            }
        }
        w
    }

    pub fn area(&self) -> f64 {
        (self.b - self.a) * (self.b - self.a)
    }

    /// Iterator over `(i, j)` for every node, in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let side = self.side();
        (0..side).flat_map(move |j| (0..side).map(move |i| (i, j)))
    }
}

/// Nodal values of a scalar quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CdiiError::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(CdiiError::InvalidInput(format!(
                "non-finite value {} at node ({}, {})",
                values[k],
                k % grid.side(),
                k / grid.side()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Crate-internal constructor for values known to be finite.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid
            .nodes()
            .map(|(i, j)| {
                let (x, y) = grid.point(i, j);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    /// Applies `f` pointwise.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Combines two fields on the same grid pointwise.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(CdiiError::GridMismatch(format!(
                "fields live on different grids (N={} vs N={})",
                self.grid.n_cells(),
                other.grid.n_cells()
            )));
        }
        Ok(())
    }

    /// Quadrature-weighted inner product `Σ w_k a_k b_k`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let side = self.grid.side();
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(k, (a, b))| self.grid.weight(k % side, k / side) * a * b)
            .sum()
    }

    /// Quadrature-weighted L² norm.
    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Quadrature-weighted L¹ norm.
    pub fn norm_l1(&self) -> f64 {
        let side = self.grid.side();
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| self.grid.weight(k % side, k / side) * v.abs())
            .sum()
    }

    pub fn norm_max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a + s * b)
    }
}

/// Nodal values of a 2-vector quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: Grid, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != grid.len() || y.len() != grid.len() {
            return Err(CdiiError::GridMismatch(format!(
                "vector components must have {} values, got {} and {}",
                grid.len(),
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(CdiiError::InvalidInput(
                "vector field contains non-finite values".into(),
            ));
        }
        Ok(Self { grid, x, y })
    }

    pub(crate) fn from_raw(grid: Grid, x: Vec<f64>, y: Vec<f64>) -> Self {
        debug_assert!(x.len() == grid.len() && y.len() == grid.len());
        Self { grid, x, y }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let (x, y) = grid
            .nodes()
            .map(|(i, j)| {
                let (px, py) = grid.point(i, j);
                f(px, py)
            })
            .unzip();
        Self { grid, x, y }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn x_comp(&self) -> &[f64] {
        &self.x
    }

    pub fn y_comp(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.grid.idx(i, j);
        (self.x[k], self.y[k])
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let values = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.hypot(*b))
            .collect();
        ScalarField::from_raw(self.grid, values)
    }

    /// Pointwise dot product with another vector field.
    pub fn dot_pointwise(&self, other: &VectorField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let values = (0..self.grid.len())
            .map(|k| self.x[k] * other.x[k] + self.y[k] * other.y[k])
            .collect();
        ScalarField::from_raw(self.grid, values)
    }

    /// Multiplies both components by a nodal scalar.
    pub fn scale_by(&self, s: &ScalarField) -> VectorField {
        debug_assert_eq!(self.grid, *s.grid());
        let sv = s.values();
        VectorField {
            grid: self.grid,
            x: self.x.iter().zip(sv).map(|(a, b)| a * b).collect(),
            y: self.y.iter().zip(sv).map(|(a, b)| a * b).collect(),
        }
    }
}
