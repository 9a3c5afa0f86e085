use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("simulation diverged: {0}")]
    Diverged(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("trajectory construction failed: {0}")]
    Trajectory(String),

    #[error("constraint system is rank-deficient; dependent rows: {rows:?}")]
    RankDeficient { rows: Vec<usize> },

    #[error("model error: {0}")]
    Model(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingDiverged { epoch: usize, detail: String },

    #[error("file format error in {path}: {detail}")]
    FileFormat { path: PathBuf, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::FileFormat {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
