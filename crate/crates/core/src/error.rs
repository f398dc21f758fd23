use thiserror::Error;

use crate::wire::FrameError;

/// Errors produced by the codec, analytics and session machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed symbol: {0}")]
    MalformedSymbol(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("frame rejected: {0}")]
    Frame(#[from] FrameError),
    #[error("transfer failed after {sent} data frames ({recovered}/{k} symbols recovered)")]
    TransferFailed { sent: u64, recovered: usize, k: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
