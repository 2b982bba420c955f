//! Sparse log-conductivity reconstruction for current density impedance
//! imaging.
//!
//! Given interior field magnitudes `H_j = e^σ |∇u_j|` for the two boundary
//! potentials `u = x` and `u = y`, the crate recovers the log-conductivity
//! `σ` by minimising an L²–L¹ regularised data fit with a Perona-Malik edge
//! term, using a variable inertial proximal scheme ([`vip`]). A Picard-type
//! substitution method ([`picard`]) is included as a baseline.
//!
//! ```
//! use cdii::{grid::Grid, phantom::{self, TestCase}, objective::Problem};
//!
//! let truth = TestCase::Disk.phantom();
//! let grid = Grid::unit(20).unwrap();
//! let data = phantom::generate_pair(&truth, 40, 20).unwrap();
//! let problem = Problem::new(data.0, data.1).unwrap();
//! assert_eq!(problem.grid(), &grid);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod objective;
pub mod pde;
pub mod phantom;
pub mod picard;
pub mod report;
pub mod vip;

pub use error::{CdiiError, Result};
pub use grid::{Grid, ScalarField, VectorField};
