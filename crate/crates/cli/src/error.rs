use std::path::PathBuf;

use thiserror::Error;

/// Everything that can stop a CLI run, each with its exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{file}:{line}: {msg}")]
    Config { file: String, line: usize, msg: String },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] anisokepler::Error),

    /// The solver ran but its result did not pass the acceptance checks.
    #[error("{0}")]
    Rejected(String),
}

impl CliError {
    /// 1 for bad input, 2 for solver-side failures.
    pub fn exit_code(&self) -> i32 {
        use anisokepler::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::Param(_) | CliError::Io { .. } => 1,
            CliError::Core(E::Domain(_) | E::InvalidParams(_) | E::Parse { .. }) => 1,
            CliError::Core(_) | CliError::Rejected(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
