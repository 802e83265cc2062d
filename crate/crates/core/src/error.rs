use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("column `{column}` has zero variance and cannot be scaled to unit variance")]
    ZeroVariance { column: String },

    #[error("rank {rank} out of range: must satisfy 1 <= S <= {max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("rank too large for unbiased variance estimate (df = {df})")]
    DegreesOfFreedom { df: i64 },

    #[error("signal rank deficient: singular value {index} is zero")]
    SignalRankDeficient { index: usize },

    #[error(
        "projection operator would be {size}x{size} (limit {limit}); use the diagonal-only computation instead"
    )]
    ProjectionTooLarge { size: usize, limit: usize },

    #[error(
        "need more points than dimensions to fit an ellipsoid (got {points} points in {dims} dims)"
    )]
    TooFewPoints { points: usize, dims: usize },

    #[error("ellipsoid covariance is singular after regularization")]
    SingularCovariance,

    #[error("every cell has leverage 1; the approximate jackknife has no usable cells")]
    AllCellsSkipped,

    #[error("{path}: line {line}, column {column}: cannot parse `{value}` as a number")]
    ParseNumber {
        path: String,
        line: usize,
        column: usize,
        value: String,
    },

    #[error("{path}: malformed table: {message}")]
    Malformed { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
