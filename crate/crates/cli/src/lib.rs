//! Scenario runner for the relay simulator: TOML scenario files, seeded
//! replicate expansion, a worker pool, CSV/JSON output and a decode
//! benchmark.

pub mod bench;
pub mod runner;
pub mod scenario;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}
