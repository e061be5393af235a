use thiserror::Error;

/// Errors raised by the library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation was called with inputs that break its preconditions
    /// (mismatched dimensions, out-of-domain dual vector, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A user supplied configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The instance admits no strictly feasible policy.
    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
