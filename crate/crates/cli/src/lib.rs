//! Library side of the `crbm` command-line tool, so the commands can be
//! driven from tests.

pub mod commands;
pub mod config;

pub use commands::{cmd_eval, cmd_extract, cmd_sample, cmd_train, EvalMode};
pub use config::{RunConfig, KEYS};

/// Command failures, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad usage or configuration, exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Unreadable or invalid input data, or failed writes, exit code 3.
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<crbm_core::Error> for CliError {
    fn from(e: crbm_core::Error) -> Self {
        match e {
            crbm_core::Error::InvalidArgument(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// 0 on success, otherwise the error's exit code.
pub fn exit_code(result: &Result<(), CliError>) -> u8 {
    result.as_ref().err().map_or(0, CliError::exit_code)
}
