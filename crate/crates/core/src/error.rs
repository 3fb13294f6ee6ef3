use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    /// The Gram (or kernel) matrix could not be factored even after the
    /// maximum diagonal jitter. For a design matrix this means it is not of
    /// full column rank.
    #[error("matrix is numerically singular (last jitter tried: {last_jitter:e})")]
    SingularGram { last_jitter: f64 },

    #[error("symmetric eigendecomposition did not converge")]
    EigFailure,

    #[error("exponent overflow guard tripped at row {row}: exponent {exponent}")]
    OverflowGuard { row: usize, exponent: f64 },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
