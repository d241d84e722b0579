use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("not enough frames: need {needed}, got {got}")]
    NotEnoughFrames { needed: usize, got: usize },

    #[error("frame indices are not consecutive: expected {expected}, got {got}")]
    NonConsecutive { expected: usize, got: usize },

    #[error("datum mismatch: {0}")]
    Datum(String),

    #[error("wrap event at pixel ({x}, {y}): phase range {range:.6} rad exceeds pi")]
    WrapEvent { x: usize, y: usize, range: f64 },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
