use thiserror::Error;

/// Failures of a CLI run, each with its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing column `{column}` in {file}")]
    MissingColumn { file: String, column: String },
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("solver error: {0}")]
    Solver(#[from] toadfront::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingColumn { .. } => 1,
            CliError::Assertion(_) => 2,
            CliError::Solver(toadfront::Error::InvalidParameter(_) | toadfront::Error::UnknownBuiltin(_)) => 1,
            CliError::Solver(_) | CliError::Io(_) => 3,
        }
    }
}
