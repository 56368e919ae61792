//! Library surface of the CLI: config loading, the subcommand
//! implementations, and the exit-code policy. `main` is a thin wrapper so
//! integration tests can drive commands in-process.

pub mod commands;
pub mod config;

/// Command failure with the process exit code it maps to.
///
/// 0 success, 1 usage, 2 data/config validation, 3 run aborted.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Aborted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Aborted(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Validation(m) => write!(f, "validation: {m}"),
            CliError::Aborted(m) => write!(f, "aborted: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
