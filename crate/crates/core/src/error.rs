use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Container header is not recognised (bad magic or version).
    #[error("format error: {0}")]
    Format(String),
    /// Container length disagrees with its declared dimensions.
    #[error("corrupt container: {0}")]
    Corruption(String),
    /// A value violates a data-model invariant.
    #[error("validation error: {0}")]
    Validation(String),
    /// Parameters are individually valid but cannot be combined.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("png encoding error: {0}")]
    Png(#[from] png::EncodingError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-parsable code used on the command line and across the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Format(_) => "E_FORMAT",
            Error::Corruption(_) => "E_CORRUPT",
            Error::Validation(_) => "E_VALIDATION",
            Error::Config(_) => "E_CONFIG",
            Error::Domain(_) => "E_DOMAIN",
            Error::DimensionMismatch(_) => "E_DIMENSION",
            Error::OutOfRange { .. } => "E_RANGE",
            Error::Io(_) => "E_IO",
            Error::Png(_) => "E_IO",
            Error::Csv(_) => "E_IO",
            Error::Json(_) => "E_IO",
        }
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Png(_) | Error::Csv(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
