use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum CdiiError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("line search failed at iteration {iteration}: no acceptable step after {attempts} increases of L")]
    LineSearchFailure { iteration: usize, attempts: usize },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<CdiiError>,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("unknown config key `{key}` at line {line}")]
    UnknownKey { key: String, line: usize },

    #[error("invalid value for `{key}`: {message}")]
    OutOfRange { key: String, message: String },

    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("malformed field file: {0}")]
    FieldFormat(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CdiiError {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ CdiiError::AtIteration { .. } => e,
            e @ CdiiError::LineSearchFailure { .. } => e,
            e => CdiiError::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CdiiError>;
