//! Experiment runner: tracking, ballistic, tuning and Pareto commands with
//! reproducible CSV/JSON output.

pub mod ballistic;
pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(String),
    #[error("simulation: {0}")]
    Sim(String),
}

impl CliError {
    /// Process exit code: 2 for bad input, 1 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } | CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Io(_) | CliError::Sim(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<pam_core::tuner::TunerError> for CliError {
    fn from(e: pam_core::tuner::TunerError) -> Self {
        CliError::Sim(e.to_string())
    }
}

impl From<pam_core::plant::PlantError> for CliError {
    fn from(e: pam_core::plant::PlantError) -> Self {
        CliError::Sim(e.to_string())
    }
}
