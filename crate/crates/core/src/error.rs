use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: offset {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("{path}: offset {offset}: label out of range: id {id} >= catalog size {size}")]
    LabelOutOfRange {
        path: PathBuf,
        offset: usize,
        id: u16,
        size: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("class absent from training split: {0}")]
    ClassAbsent(String),

    #[error("infeasible placement for object {0}")]
    InfeasiblePlacement(String),

    #[error("non-submodular edge energy: {0}")]
    NonSubmodular(String),

    #[error("singular system at lambda = 0; use a ridge lambda > 0")]
    Singular,

    #[error("episode already complete")]
    EpisodeComplete,

    #[error("action {0} already taken")]
    RepeatedAction(u16),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than by the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
