//! Error type shared by every module in the engine.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Engine-wide error enum.
///
/// The CLI maps these onto exit codes: parameter/config/dimension/index
/// errors are usage failures (1), format and I/O errors are 2, numeric and
/// state errors are 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A scalar or configuration value is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// An index (class label, tensor coordinate) is out of range.
    #[error("index out of range: {0}")]
    Index(String),
    /// Non-finite values or a divergent quantity.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// An operation was called with missing or inconsistent recorded state.
    #[error("state error: {0}")]
    State(String),
    /// Invalid experiment or network configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A persisted file is malformed; `offset` is the byte where parsing failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
