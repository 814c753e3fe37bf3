//! Tool-level errors, partitioned by the CLI exit-code contract:
//! usage problems exit 1, data problems exit 2.

use dancegen_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolError {
    /// The invocation itself is wrong: flags, missing arguments, nonsense
    /// combinations. Exit code 1.
    #[error("usage error: {0}")]
    Usage(String),
    /// The inputs are wrong: unreadable files, schema violations, corrupt
    /// payloads, degenerate audio. Exit code 2.
    #[error("data error: {0}")]
    Data(String),
}

impl ToolError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ToolError::Usage(_) => 1,
            ToolError::Data(_) => 2,
        }
    }
}

impl From<CoreError> for ToolError {
    fn from(e: CoreError) -> ToolError {
        ToolError::Data(e.to_string())
    }
}

impl From<std::io::Error> for ToolError {
    fn from(e: std::io::Error) -> ToolError {
        ToolError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ToolError>;

/// Attaches a file path to an I/O-ish error message.
pub fn in_file(path: &std::path::Path, msg: impl std::fmt::Display) -> ToolError {
    ToolError::Data(format!("{}: {msg}", path.display()))
}
