use thiserror::Error;

/// Largest total qubit count a dense state may carry.
pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violates a mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested computation exceeds a size guard.
    #[error("resource limit: {0}")]
    Resource(String),
    /// An operation was invoked in a mode that does not support it.
    #[error("usage error: {0}")]
    Usage(String),
    /// A forced measurement outcome has (numerically) zero probability.
    #[error("unreachable branch {outcome}: probability {probability:e}")]
    Unreachable { outcome: String, probability: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
