use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("illegal action {action} at step {step}")]
    IllegalAction { action: usize, step: usize },
    #[error("sampling failed after {tries} tries")]
    SamplingFailure { tries: usize },
    #[error("training diverged: non-finite gradient")]
    TrainingDivergence,
    #[error("no correction exists: outcome-1 block is not proportional to a unitary")]
    NoCorrectionExists,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
