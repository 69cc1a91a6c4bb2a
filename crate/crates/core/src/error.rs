use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("size mismatch: expected {expected} elements, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("unsupported {0}")]
    Unsupported(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("every white-reference element is within the dead-pixel threshold of dark")]
    DeadReference,
    #[error("mask is empty")]
    EmptyMask,
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("cache does not belong to the current parameters")]
    StaleCache,
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("kernel matrix factorization failed with jitter up to {max_jitter:e}")]
    Factorization { max_jitter: f64 },
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<png::EncodingError> for Error {
    fn from(e: png::EncodingError) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<png::DecodingError> for Error {
    fn from(e: png::DecodingError) -> Self {
        Error::Format(e.to_string())
    }
}
