use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("config: {0}")]
    Config(String),
    #[error("blow-up: non-finite value at step {step} (t = {time})")]
    BlowUp { step: u64, time: f64 },
    #[error("stage timeout after {elapsed} time units (inf = {inf}, sup = {sup})")]
    StageTimeout { elapsed: f64, inf: f64, sup: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
