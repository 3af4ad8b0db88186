use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    ConfigIo {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config is not valid JSON: {0}")]
    ConfigSyntax(serde_json::Error),

    #[error("config has {} violation(s):\n  {}", .0.len(), .0.join("\n  "))]
    Schema(Vec<String>),

    #[error(transparent)]
    Simulation(#[from] crossdiff::Error),

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigIo { .. } | CliError::ConfigSyntax(_) | CliError::Schema(_) => {
                EXIT_CONFIG
            }
            CliError::Simulation(e) => match e {
                crossdiff::Error::Stability { .. }
                | crossdiff::Error::MaxStepsExceeded { .. }
                | crossdiff::Error::Domain(_) => EXIT_NUMERICAL,
                crossdiff::Error::InvalidInput(_) | crossdiff::Error::GridMismatch(_) => {
                    EXIT_CONFIG
                }
                crossdiff::Error::Io(_) => EXIT_FAILURE,
            },
            CliError::Output { .. } => EXIT_FAILURE,
        }
    }

    /// Short machine-readable category for the manifest.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigIo { .. } => "ConfigIoError",
            CliError::ConfigSyntax(_) | CliError::Schema(_) => "SchemaError",
            CliError::Simulation(e) => match e {
                crossdiff::Error::Stability { .. } => "StabilityError",
                crossdiff::Error::MaxStepsExceeded { .. } => "MaxStepsExceeded",
                crossdiff::Error::Domain(_) => "DomainError",
                crossdiff::Error::InvalidInput(_) => "InvalidInput",
                crossdiff::Error::GridMismatch(_) => "GridMismatch",
                crossdiff::Error::Io(_) => "IoError",
            },
            CliError::Output { .. } => "OutputError",
        }
    }
}
