use thiserror::Error;

use crate::frontend::Diagnostic;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{0}")]
    Diagnostic(#[from] Diagnostic),
    #[error("combinational oscillation: no fixed point after {0} scheduling events")]
    Oscillation(u64),
    #[error("runaway state machine: exceeded {0} device cycles")]
    Runaway(u64),
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("unknown file descriptor {0}")]
    UnknownFd(u64),
    #[error("{path}: {message} (errno {code})")]
    Io {
        path: String,
        message: String,
        code: i32,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("checkpoint/program mismatch")]
    HashMismatch,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<String>, e: &std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            message: e.to_string(),
            code: e.raw_os_error().unwrap_or(5),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
