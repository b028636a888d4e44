use std::path::Path;

use serde_json::json;
use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PROCESSING: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {reason}")]
    Input { path: String, reason: String },
    #[error("no ephemeris available: {0}")]
    NoEphemeris(String),
    #[error("{0}")]
    Processing(String),
    #[error("writing {path}: {reason}")]
    Output { path: String, reason: String },
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Input {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    pub fn input(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::io(path, e)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Input { .. } => "input",
            CliError::NoEphemeris(_) => "no_ephemeris",
            CliError::Processing(_) => "processing",
            CliError::Output { .. } => "output",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) | CliError::Input { .. } => EXIT_INPUT,
            CliError::NoEphemeris(_) | CliError::Processing(_) | CliError::Output { .. } => EXIT_PROCESSING,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        })
        .to_string()
    }
}
