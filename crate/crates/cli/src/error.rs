use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// `line` is 1-based; 0 means the file as a whole.
    #[error("{origin}:{line}: {message}")]
    Config {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("solver failed: {0}")]
    Solver(#[from] ret_core::Error),
    #[error("{failed} of {total} sweep rows failed")]
    SweepRows { failed: usize, total: usize },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Solver(_) | CliError::SweepRows { .. } => 3,
            CliError::Output { .. } => 1,
        }
    }
}
