use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Core(#[from] stepprover_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CliError::Format { path: path.into(), line, message: message.into() }
    }

    /// 0 success, 1 usage or precondition failure, 2 IO (including
    /// unreadable or malformed files).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Precondition(_) | CliError::Core(_) => 1,
            CliError::Io { .. } | CliError::Format { .. } => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
