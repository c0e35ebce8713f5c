use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Bisection could not reach the requested error level.
    #[error("calibration failed for {kind}: target MSE {target} unreachable, max achievable {achievable}")]
    Calibration {
        kind: &'static str,
        target: f64,
        achievable: f64,
    },

    /// A solver iterate became non-finite.
    #[error("solver diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
