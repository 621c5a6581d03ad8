use std::path::PathBuf;

/// Errors produced anywhere in the planning stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("grid of {requested} voxels exceeds the cap of {cap}")]
    VoxelCap { requested: u64, cap: u64 },

    #[error("grid file format error: {0}")]
    Format(String),

    #[error("metric is not positive definite")]
    NotPositiveDefinite,

    #[error("could not place sphere {index} after {attempts} attempts")]
    PlacementFailed { index: usize, attempts: usize },

    #[error("empty simulation log")]
    EmptyLog,

    #[error("config error in {}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
