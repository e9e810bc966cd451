use thiserror::Error;

/// Errors reported by the numerical pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),
    /// Two fields with incompatible quasi-periodicity sectors or grids were combined.
    #[error("sector mismatch: {0}")]
    SectorMismatch(String),
    /// A ladder or normalisation step collapsed the norm of its input.
    #[error("degenerate input: norm {norm:.3e} fell below {threshold:.1e}")]
    Degenerate { norm: f64, threshold: f64 },
    /// An iterative solver stopped before reaching its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    /// The request is outside what the implementation supports.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
