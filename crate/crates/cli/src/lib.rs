//! File formats and command implementations behind the `pcdlqr` binary.

pub mod commands;
pub mod config;
pub mod gain;
pub mod grid;
pub mod manifest;
pub mod output;
pub mod svg;

use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    NoCertificate(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::NoCertificate(_) => 3,
        }
    }
}

impl From<pcdlqr::Error> for CliError {
    fn from(e: pcdlqr::Error) -> Self {
        match e {
            pcdlqr::Error::SynthesisInfeasible(_) => CliError::Infeasible(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
