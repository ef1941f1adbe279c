use thiserror::Error;

/// Errors produced by the numerical layers and the run driver.
#[derive(Debug, Error)]
pub enum YoError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("input error: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The pairing fails the Cholesky test; the positivity hypothesis
    /// mu(M, dM, [g]) > 0 does not hold for this instance.
    #[error("energy form is not positive definite ({detail}); hypothesis mu(M, dM, [g]) > 0 violated")]
    NotPositiveDefinite { detail: String },

    #[error("energy form is ill conditioned (condition estimate {estimate:.3e} > {limit:.1e}); refusing to solve")]
    IllConditioned { estimate: f64, limit: f64 },

    /// Iterative solver gave up. Carries the best iterate so callers can inspect it.
    #[error("solver did not converge after {iterations} iterations (kkt residual {residual:.3e})")]
    Solver {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, YoError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(YoError::Dimension { expected, got });
    }
    Ok(())
}
