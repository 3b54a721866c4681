//! Error type and the mapping to process exit codes.

use stochastic_euler::Error as CoreError;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_RESIDUAL: i32 = 4;
pub const EXIT_CERTIFICATE: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                CoreError::Config(_)
                | CoreError::InvalidDomain(_)
                | CoreError::InvalidData(_)
                | CoreError::InvalidGrid { .. }
                | CoreError::TestClass(_)
                | CoreError::UnsupportedDimension(_) => EXIT_CONFIG,
                CoreError::InfeasibleEnergy { .. } | CoreError::Stalled { .. } | CoreError::ClockOverrun { .. } => {
                    EXIT_INFEASIBLE
                }
                CoreError::Degenerate(_) => EXIT_CERTIFICATE,
                _ => EXIT_IO,
            },
            CliError::Artifact(_) | CliError::Io(_) | CliError::Json(_) => EXIT_IO,
        }
    }
}
