//! Ground-truth phantoms and synthetic interior data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CdiiError, Result};
use crate::grid::{Grid, ScalarField};
use crate::linalg::SolverOptions;
use crate::objective::{interior_data, BoxBounds, Weights};
use crate::pde::{self, BoundaryData, ConductivityOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Disk { cx: f64, cy: f64, r: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    /// Closed axis-aligned rectangle.
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Closed outer square `[lo, hi]²` minus the open inner square `(ilo, ihi)²`.
    SquareAnnulus { lo: f64, hi: f64, ilo: f64, ihi: f64 },
    /// Polar cardioid `r ≤ s (1 − cos(φ − φ₀))` about its cusp `(cx, cy)`.
    Cardioid { cx: f64, cy: f64, s: f64, phi0: f64 },
}

impl Geometry {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Geometry::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Geometry::Ellipse { cx, cy, rx, ry } => ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0,
            Geometry::Rect { x0, x1, y0, y1 } => x0 <= x && x <= x1 && y0 <= y && y <= y1,
            Geometry::SquareAnnulus { lo, hi, ilo, ihi } => {
                let outer = lo <= x && x <= hi && lo <= y && y <= hi;
                let inner = ilo < x && x < ihi && ilo < y && y < ihi;
                outer && !inner
            }
            Geometry::Cardioid { cx, cy, s, phi0 } => {
                let (dx, dy) = (x - cx, y - cy);
                let rho = dx.hypot(dy);
                rho == 0.0 || rho <= s * (1.0 - (dy.atan2(dx) - phi0).cos())
            }
        }
    }

    /// Axis-aligned bounding box `(xmin, xmax, ymin, ymax)`.
    fn bbox(&self) -> (f64, f64, f64, f64) {
        match *self {
            Geometry::Disk { cx, cy, r } => (cx - r, cx + r, cy - r, cy + r),
            Geometry::Ellipse { cx, cy, rx, ry } => (cx - rx, cx + rx, cy - ry, cy + ry),
            Geometry::Rect { x0, x1, y0, y1 } => (x0, x1, y0, y1),
            Geometry::SquareAnnulus { lo, hi, .. } => (lo, hi, lo, hi),
            Geometry::Cardioid { cx, cy, s, phi0 } => (0..=720).fold(
                (cx, cx, cy, cy),
                |(x0, x1, y0, y1), k| {
                    let phi = k as f64 * std::f64::consts::PI / 360.0;
                    let r = s * (1.0 - (phi - phi0).cos());
                    let (x, y) = (cx + r * phi.cos(), cy + r * phi.sin());
                    (x0.min(x), x1.max(x), y0.min(y), y1.max(y))
                },
            ),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Geometry::Disk { r, .. } => r > 0.0,
            Geometry::Ellipse { rx, ry, .. } => rx > 0.0 && ry > 0.0,
            Geometry::Rect { x0, x1, y0, y1 } => x0 < x1 && y0 < y1,
            Geometry::SquareAnnulus { lo, hi, ilo, ihi } => lo < ilo && ilo < ihi && ihi < hi,
            Geometry::Cardioid { s, .. } => s > 0.0,
        };
        if !ok {
            return Err(CdiiError::InvalidInput(format!("degenerate shape {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub geometry: Geometry,
    pub value: f64,
}

/// Piecewise-constant log-conductivity. Later shapes overwrite earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub shapes: Vec<Shape>,
    pub background: f64,
}

impl Default for Phantom {
    fn default() -> Self {
        Self {
            shapes: Vec::new(),
            background: 0.0,
        }
    }
}

impl Phantom {
    pub fn new(shapes: Vec<Shape>, background: f64) -> Self {
        Self { shapes, background }
    }

    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.shapes
            .iter()
            .rev()
            .find(|s| s.geometry.contains(x, y))
            .map_or(self.background, |s| s.value)
    }

    /// Checks shape values against `bounds` and geometry against `(a, b)²`.
    pub fn validate(&self, bounds: &BoxBounds, a: f64, b: f64) -> Result<()> {
        if !bounds.contains(self.background) {
            return Err(CdiiError::InvalidInput(format!(
                "background {} outside bounds [{}, {}]",
                self.background, bounds.sigma_l, bounds.sigma_u
            )));
        }
        for s in &self.shapes {
            s.geometry.validate()?;
            if !bounds.contains(s.value) {
                return Err(CdiiError::InvalidInput(format!(
                    "shape value {} outside bounds [{}, {}]",
                    s.value, bounds.sigma_l, bounds.sigma_u
                )));
            }
            let (x0, x1, y0, y1) = s.geometry.bbox();
            if x0 < a || y0 < a || x1 > b || y1 > b {
                return Err(CdiiError::InvalidInput(format!("shape {:?} leaves the domain", s.geometry)));
            }
        }
        Ok(())
    }
}

/// Nodal samples of the phantom, no anti-aliasing.
pub fn rasterize(phantom: &Phantom, grid: Grid) -> ScalarField {
    ScalarField::from_fn(grid, |x, y| phantom.value_at(x, y))
}

/// The four reference phantoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestCase {
    /// Single disk.
    Disk,
    /// Two lung ellipses and a heart disk.
    HeartLung,
    /// Square annulus with a hole plus two overlapping disks.
    AnnulusDisks,
    /// Annulus, four disks and two cardioids.
    Mixed,
}

impl TestCase {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            1 => Ok(Self::Disk),
            2 => Ok(Self::HeartLung),
            3 => Ok(Self::AnnulusDisks),
            4 => Ok(Self::Mixed),
            _ => Err(CdiiError::InvalidInput(format!("unknown test case {n}, expected 1-4"))),
        }
    }

    pub fn number(&self) -> u32 {
        match self {
            Self::Disk => 1,
            Self::HeartLung => 2,
            Self::AnnulusDisks => 3,
            Self::Mixed => 4,
        }
    }

    pub fn phantom(&self) -> Phantom {
        let disk = |cx, cy, r, value| Shape {
            geometry: Geometry::Disk { cx, cy, r },
            value,
        };
        let annulus = |hole: f64| {
            [
                Shape {
                    geometry: Geometry::SquareAnnulus {
                        lo: -0.8,
                        hi: -0.1,
                        ilo: -0.7,
                        ihi: -0.2,
                    },
                    value: 3.0,
                },
                Shape {
                    geometry: Geometry::Rect {
                        x0: -0.7,
                        x1: -0.2,
                        y0: -0.7,
                        y1: -0.2,
                    },
                    value: hole,
                },
            ]
        };
        let shapes = match self {
            Self::Disk => vec![disk(0.25, 0.25, 0.25, 1.0)],
            Self::HeartLung => vec![
                Shape {
                    geometry: Geometry::Ellipse {
                        cx: -0.4,
                        cy: 0.2,
                        rx: 0.22,
                        ry: 0.42,
                    },
                    value: 1.0,
                },
                Shape {
                    geometry: Geometry::Ellipse {
                        cx: 0.4,
                        cy: 0.2,
                        rx: 0.22,
                        ry: 0.42,
                    },
                    value: 1.0,
                },
                disk(0.0, -0.25, 0.22, 0.5),
            ],
            Self::AnnulusDisks => {
                let mut v = annulus(-2.0).to_vec();
                v.push(disk(0.7, 0.7, 0.2, 1.0));
                v.push(disk(0.55, 0.55, 0.15, 2.0));
                v
            }
            Self::Mixed => {
                let heart = std::f64::consts::FRAC_PI_2;
                let mut v = annulus(-1.5).to_vec();
                v.push(disk(0.7, 0.7, 0.2, 1.0));
                v.push(disk(0.55, 0.55, 0.15, 2.0));
                v.push(disk(0.0, 0.0, 0.25, 1.5));
                v.push(disk(0.05, 0.6, 0.2, 2.5));
                v.push(Shape {
                    geometry: Geometry::Cardioid {
                        cx: -0.55,
                        cy: 0.75,
                        s: 0.15,
                        phi0: heart,
                    },
                    value: 4.0,
                });
                v.push(Shape {
                    geometry: Geometry::Cardioid {
                        cx: -0.3,
                        cy: 0.4,
                        s: 0.08,
                        phi0: heart,
                    },
                    value: 3.0,
                });
                v
            }
        };
        Phantom::new(shapes, 0.0)
    }

    /// Bounds wide enough to leave the phantom values unconstrained.
    pub fn bounds(&self) -> BoxBounds {
        match self {
            Self::Mixed => BoxBounds {
                sigma_l: -4.0,
                sigma_u: 5.0,
            },
            _ => BoxBounds::default(),
        }
    }

    /// Regularisation weights used for the noise-free reference runs.
    pub fn weights(&self) -> Weights {
        Weights::default()
    }
}

/// Bilinear interpolation of `fine` at the nodes of `coarse`.
pub fn restrict_bilinear(fine: &ScalarField, coarse: Grid) -> Result<ScalarField> {
    let fg = fine.grid();
    if (fg.a() - coarse.a()).abs() > 1e-12 || (fg.b() - coarse.b()).abs() > 1e-12 {
        return Err(CdiiError::GridMismatch("restriction needs grids on the same domain".into()));
    }
    let n = fg.n_cells();
    let h = fg.h();
    let locate = |p: f64| -> (usize, f64) {
        let t = (p - fg.a()) / h;
        let i0 = (t.floor().max(0.0) as usize).min(n - 1);
        (i0, (t - i0 as f64).clamp(0.0, 1.0))
    };
    let values = coarse
        .nodes()
        .map(|(i, j)| {
            let (x, y) = coarse.point(i, j);
            let (ix, tx) = locate(x);
            let (iy, ty) = locate(y);
            let f00 = fine.at(ix, iy);
            let f10 = fine.at(ix + 1, iy);
            let f01 = fine.at(ix, iy + 1);
            let f11 = fine.at(ix + 1, iy + 1);
            (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
        })
        .collect();
    ScalarField::new(coarse, values)
}

/// Interior data `e^σ|∇u|` for boundary data `f`, computed on an
/// `n_fine` grid and restricted to an `n_coarse` grid.
pub fn generate_data(
    phantom: &Phantom,
    f: BoundaryData,
    n_fine: usize,
    n_coarse: usize,
    options: SolverOptions,
) -> Result<ScalarField> {
    check_sizes(n_fine, n_coarse)?;
    let fine = Grid::unit(n_fine)?;
    let sigma = rasterize(phantom, fine);
    let u = pde::solve_forward(&sigma, |x, y| f.eval(x, y), options)?;
    restrict_bilinear(&interior_data(&sigma, &u)?, Grid::unit(n_coarse)?)
}

/// Data for `f = x` and `f = y` from a single fine-grid factorization.
pub fn generate_pair(phantom: &Phantom, n_fine: usize, n_coarse: usize) -> Result<(ScalarField, ScalarField)> {
    generate_pair_with(phantom, n_fine, n_coarse, SolverOptions::default())
}

pub fn generate_pair_with(
    phantom: &Phantom,
    n_fine: usize,
    n_coarse: usize,
    options: SolverOptions,
) -> Result<(ScalarField, ScalarField)> {
    check_sizes(n_fine, n_coarse)?;
    let fine = Grid::unit(n_fine)?;
    let coarse = Grid::unit(n_coarse)?;
    let sigma = rasterize(phantom, fine);
    let op = ConductivityOperator::new(&sigma, options)?;
    let (u1, u2) = pde::join(|| op.solve_dirichlet(|x, _| x), || op.solve_dirichlet(|_, y| y));
    let h1 = restrict_bilinear(&interior_data(&sigma, &u1?)?, coarse)?;
    let h2 = restrict_bilinear(&interior_data(&sigma, &u2?)?, coarse)?;
    Ok((h1, h2))
}

fn check_sizes(n_fine: usize, n_coarse: usize) -> Result<()> {
    if n_fine <= n_coarse {
        return Err(CdiiError::InvalidInput(format!(
            "fine grid ({n_fine}) must be finer than the reconstruction grid ({n_coarse})"
        )));
    }
    Ok(())
}

/// Multiplicative Gaussian noise `H (1 + p ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
    /// Independent ChaCha stream, so each data set can draw its own noise.
    #[serde(default)]
    pub stream: u64,
}

impl NoiseSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self> {
        if !(level.is_finite() && level >= 0.0) {
            return Err(CdiiError::OutOfRange {
                key: "noise".into(),
                message: format!("must be non-negative, got {level}"),
            });
        }
        Ok(Self { level, seed, stream: 0 })
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }
}

pub fn add_noise(h: &ScalarField, spec: &NoiseSpec) -> ScalarField {
    if spec.level == 0.0 {
        return h.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(spec.stream);
    h.map(|v| {
        let xi: f64 = StandardNormal.sample(&mut rng);
        v * (1.0 + spec.level * xi)
    })
}
