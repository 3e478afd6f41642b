use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {point:?} lies outside the unit box")]
    OutOfBounds { point: Vec<f64> },

    #[error("objective index {index} out of range for {count} objectives")]
    ObjectiveIndex { index: usize, count: usize },

    #[error("covariance factorization failed for objective {objective}")]
    Factorization { objective: usize },

    #[error("sobol dimension {0} exceeds the direction-number table")]
    UnsupportedDimension(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("budget exhausted: {needed} needed, {remaining} remaining")]
    Budget { needed: f64, remaining: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
