use std::path::PathBuf;

/// Errors raised by file handling, data loading and experiments.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] lipnet_core::Error),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid arguments: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Machine-readable category used in failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Json { .. } => "json",
            Self::Csv(_) => "csv",
            Self::Core(lipnet_core::Error::Diverged { .. }) => "diverged",
            Self::Core(_) => "core",
            Self::Checkpoint(_) => "checkpoint",
            Self::Dataset(_) => "dataset",
            Self::Usage(_) => "usage",
        }
    }

    /// Process exit code: 1 for failed runs, 2 for usage and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(lipnet_core::Error::Diverged { .. }) => 1,
            _ => 2,
        }
    }
}
