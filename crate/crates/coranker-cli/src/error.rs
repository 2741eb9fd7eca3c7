//! Error type carrying the process exit code for each failure class.

use std::fmt;

/// Command failure, bucketed by exit code: 1 for usage and configuration
/// problems, 2 for data and IO problems, 3 for systemic backend failures.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Backend(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn backend(msg: impl Into<String>) -> Self {
        CliError::Backend(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Io(msg) | CliError::Backend(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Attach a file path to an IO error so the message says what was being
/// touched.
pub trait PathContext<T> {
    fn path_context(self, path: &std::path::Path) -> Result<T, CliError>;
}

impl<T, E: fmt::Display> PathContext<T> for Result<T, E> {
    fn path_context(self, path: &std::path::Path) -> Result<T, CliError> {
        self.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
