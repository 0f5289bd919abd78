use ncpla::PlaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Core(#[from] PlaError),
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Core(e) => match e {
                PlaError::Infeasible(_) | PlaError::DeltaUnreachable { .. } => EXIT_INFEASIBLE,
                _ => EXIT_CONFIG,
            },
        }
    }
}
