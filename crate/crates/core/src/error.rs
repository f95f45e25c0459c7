use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The input did not conform to a file schema.
    #[error("schema error in {location}: {message}")]
    Schema { location: String, message: String },

    /// Well-formed input that violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("hermiticity violated at {indices}: residual {residual:.3e}")]
    Hermiticity { indices: String, residual: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Two computations that must agree did not.
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dimension {dimension} exceeds the configured budget of {budget}")]
    Capacity { dimension: usize, budget: usize },

    #[error("selection error: {0}")]
    Selection(String),

    #[error("every overlap mode fell below the threshold {threshold:e}")]
    DegenerateOverlap { threshold: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
