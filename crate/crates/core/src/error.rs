use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("episode {episode}: simulation exceeded the {cap_s} s duration cap")]
    MaxDuration { episode: u32, cap_s: f64 },

    #[error("episode {episode}: {source}")]
    Episode {
        episode: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("clustering produced only noise points (eps = {eps}, min_pts = {min_pts}); increase eps or lower min_pts")]
    AllNoise { eps: f64, min_pts: usize },

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("train-mode forward pass needs a batch of at least 2 rows")]
    BatchTooSmall,

    #[error("forward cache is stale: {0}")]
    StaleCache(&'static str),

    #[error("dataset does not match task: {0}")]
    TaskMismatch(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad configuration or flags rather than data.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } | Error::Episode { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
