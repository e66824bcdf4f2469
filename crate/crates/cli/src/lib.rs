//! Batch experiment driver for `twistorlab`: configuration files, pipelines,
//! reports and the acceptance verification suite.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] twistorlab::Error),

    #[error("output error: {0}")]
    Output(String),

    #[error("criterion {0}: {1}")]
    Criterion(usize, Box<CliError>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

/// Process exit status: all checks passed.
pub const EXIT_PASS: i32 = 0;
/// Process exit status: at least one check failed.
pub const EXIT_FAIL: i32 = 1;
/// Process exit status: invalid configuration or runtime error.
pub const EXIT_ERROR: i32 = 2;
