use std::process::ExitCode;

use thiserror::Error;

/// Failure of a command, carrying its stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Io(_) => 2,
            Self::Data(_) => 3,
            Self::Numerical(_) => 4,
        }
    }

    pub fn to_exit_code(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }

    /// Classifies a library error raised while loading or splitting data.
    pub fn data(e: shine_core::Error) -> Self {
        match e {
            shine_core::Error::InvalidConfig(m) => Self::Config(m),
            other => Self::Data(other.to_string()),
        }
    }

    /// Classifies a library error raised while running a solver.
    pub fn run(e: shine_core::Error) -> Self {
        use shine_core::Error as E;
        match e {
            E::InvalidConfig(m) => Self::Config(m),
            E::DimensionMismatch { .. } => Self::Config(e.to_string()),
            E::Io(m) => Self::Data(m),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
