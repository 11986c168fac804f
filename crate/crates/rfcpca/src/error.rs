use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of a command, each tied to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("fit failed with {name}: {message}")]
    Fit { name: String, message: String },
    #[error("dataset hash mismatch: fit has {fit}, data has {data}")]
    HashMismatch { fit: String, data: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Fit { .. } => 4,
            CliError::HashMismatch { .. } => 5,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_path_buf(), message: err.to_string() }
    }

    pub fn fit(err: &rfcpca_core::Error) -> Self {
        CliError::Fit { name: err.name().to_string(), message: err.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
