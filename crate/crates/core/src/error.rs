use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("entry {index} is {value}, expected -1 or +1")]
    NotSignedBit { index: usize, value: f64 },

    #[error("invalid parity task: {0}")]
    InvalidTask(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("dimension {d} exceeds the enumeration cap of {cap}")]
    EnumerationCap { d: usize, cap: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("integer overflow while evaluating {0}")]
    Overflow(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown config key `{key}` at {path}:{line}")]
    UnknownKey {
        path: PathBuf,
        line: usize,
        key: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
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
