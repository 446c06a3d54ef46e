use thiserror::Error;

/// Failure modes shared by every operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Parameters are individually valid but do not fit together.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient budget: {message}; suggested reps: {suggested_reps}")]
    Budget { message: String, suggested_reps: u64 },
    #[error("state error: {0}")]
    State(String),
    #[error("unsupported moment order {0}; at most 3 is supported")]
    UnsupportedOrder(usize),
    #[error("pathological configuration: {0}")]
    Pathological(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
