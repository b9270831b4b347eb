use std::path::Path;

use miolab_core::Error as CoreError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Every failure a subcommand can end with, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// A check or tolerance failed (exit 1).
    #[error("{0}")]
    Check(String),
    /// Bad arguments, config or input files (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Training produced non-finite or degenerate values (exit 3).
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Diverged(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn check(msg: impl Into<String>) -> Self {
        CliError::Check(msg.into())
    }

    /// Wraps a filesystem error with the path it concerns.
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Usage(format!("{}: {err}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Divergence { .. } | CoreError::DegenerateVector { .. } => {
                CliError::Diverged(e.to_string())
            }
            CoreError::Audit { .. } => CliError::Check(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("csv: {e}"))
    }
}
