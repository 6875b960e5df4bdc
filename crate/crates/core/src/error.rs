use thiserror::Error;

/// Errors raised by the synthesis and verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid task map: {0}")]
    InvalidTaskMap(String),

    #[error("singular matrix in {context} (condition number {condition:.3e})")]
    Singular { context: &'static str, condition: f64 },

    #[error("pose {index} rejected: {reason}")]
    PoseRejected { index: usize, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("simulation aborted at t = {time}: {reason}")]
    SimulationAborted { time: f64, reason: String },

    #[error("audit refused: {0}")]
    AuditRefused(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
