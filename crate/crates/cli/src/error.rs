use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("premise violated: {0}")]
    Premise(String),

    #[error(transparent)]
    Library(bell_lab::Error),
}

impl CliError {
    /// 2 for a violated premise (a scientific outcome), 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Premise(_) => 2,
            _ => 1,
        }
    }
}

impl From<bell_lab::Error> for CliError {
    fn from(e: bell_lab::Error) -> Self {
        match e {
            bell_lab::Error::PremiseViolation(msg) => CliError::Premise(msg),
            bell_lab::Error::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Library(other),
        }
    }
}
