use thiserror::Error;

/// Errors raised anywhere in the offline/online pipeline.
#[derive(Debug, Error)]
pub enum RbError {
    #[error("non-finite scalar: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular or numerically singular ({0})")]
    Singular(String),

    #[error("matrix is not Hermitian positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parameter {mu} is outside the trial grid; EIM-based queries are restricted to the grid")]
    OffGrid { mu: f64 },

    #[error("estimator disabled: {0}")]
    Disabled(String),

    #[error("missing output functional")]
    MissingOutput,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RbError>;
