use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty name")]
    EmptyName,

    #[error("zero valid names in {0}")]
    NoNames(PathBuf),

    #[error("duplicate name after normalization: {0}")]
    DuplicateName(String),

    #[error("sample fraction {0} outside (0, 1]")]
    FractionOutOfRange(f64),

    #[error("entropy_bits {0} outside [0, 256]")]
    EntropyOutOfRange(u32),

    #[error("key space of 2^{0} keys is too large to enumerate (max 2^32)")]
    KeySpaceTooLarge(u32),

    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("tag collision: {first} and {second} both map to {tag}")]
    TagCollision {
        first: String,
        second: String,
        tag: String,
    },

    #[error("invalid cost model: {0}")]
    InvalidCostModel(String),

    #[error("invalid similarity table: {0}")]
    InvalidTable(String),

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("threshold mismatch: {left} vs {right}")]
    ThresholdMismatch { left: u32, right: u32 },

    #[error("expected a {expected} table, got {actual}")]
    IdKindMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("contradiction: {0}")]
    Contradiction(String),

    #[error("missing ground truth for {0}")]
    MissingTruth(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
