use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum ArsError {
    /// Invalid configuration supplied by the caller (bad dimensions,
    /// out-of-range hyperparameters, unknown names).
    #[error("configuration error: {0}")]
    Config(String),

    /// An API precondition was violated (dimension mismatch, non-finite
    /// input where finite values are required).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative solver failed to converge.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Least-squares identification produced a rank-deficient estimate.
    #[error("singular estimate: {0}")]
    SingularEstimate(String),

    /// A parallel worker failed while processing a batch item.
    #[error("worker failure on item {item}: {message}")]
    Worker { item: usize, message: String },

    /// Malformed on-disk data (checkpoint, matrix file, manifest, curve).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ArsError>;
