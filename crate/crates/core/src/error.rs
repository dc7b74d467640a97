use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} is invalid: need an even number of modes >= 4")]
    InvalidGrid(usize),

    #[error("size mismatch: expected {expected} values, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("field contains a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("right-hand side has non-zero mean {mean:e} (tolerance {tol:e})")]
    NonZeroMean { mean: f64, tol: f64 },

    #[error("right-hand side has a component {component:e} in the operator null space")]
    NullSpaceComponent { component: f64 },

    #[error("mobility must be positive, minimum is {min:e}")]
    NonPositiveMobility { min: f64 },

    #[error("concentration must be positive, minimum is {min:e}")]
    NonPositiveConcentration { min: f64 },

    #[error("net charge {charge:e} exceeds tolerance {tol:e}")]
    NetChargeNonzero { charge: f64, tol: f64 },

    #[error("candidate mass {actual:e} differs from reference mass {expected:e}")]
    MassMismatch { expected: f64, actual: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("snapshot header is corrupt: {0}")]
    CorruptHeader(String),

    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("snapshot payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("snapshot grid N={found} rejected, run uses N={expected}")]
    RejectedGrid { expected: usize, found: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures raised while stepping (the CLI maps these to exit code 2).
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::NoConvergence { .. } | Error::Step { .. })
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
