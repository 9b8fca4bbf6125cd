use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("value {value} outside domain of {op}")]
    Domain { op: &'static str, value: f64 },

    #[error("balls are not in partial overlap (d={dist}, r1={r1}, r2={r2})")]
    NotPartialOverlap { dist: f64, r1: f64, r2: f64 },

    #[error("object set cannot be split: all points coincide")]
    Unsplittable,

    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("artifact: {0}")]
    Artifact(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
