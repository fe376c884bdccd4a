use std::path::PathBuf;

use actuator_core::optimize::RunFailure;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}:{line}: {message}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("solver failed: {0}")]
    Solver(#[from] actuator_core::Error),

    #[error("solver failed: {0}")]
    Run(#[from] Box<RunFailure>),

    #[error("cannot serialize results: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            CliError::Io { .. } | CliError::Json(_) => 1,
            CliError::Solver(_) | CliError::Run(_) => 3,
        }
    }
}
