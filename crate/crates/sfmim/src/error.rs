use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not found")]
    NotFound { path: PathBuf },
    #[error("{path}: malformed PNG: {reason}")]
    MalformedPng { path: PathBuf, reason: String },
    #[error("{path}: unsupported PNG layout: {reason}")]
    UnsupportedPng { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: checkpoint: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("{path}: manifest: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] sfmim_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound { path }
        } else {
            Error::Io { path, source }
        }
    }
}
