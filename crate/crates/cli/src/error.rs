use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Argument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} verification violation(s)")]
    Violation(usize),
    #[error(transparent)]
    Library(#[from] qdrl::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Violation(_) => 1,
            CliError::Argument(_) => 2,
            CliError::Library(qdrl::Error::InvalidArgument(_) | qdrl::Error::ShapeMismatch { .. }) => 2,
            CliError::Library(qdrl::Error::Json(_)) => 2,
            CliError::Library(_) => 1,
            CliError::Io { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
