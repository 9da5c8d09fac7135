use thiserror::Error;

/// Errors raised by the analytic engine, the storage model and the phase machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("index {index} out of range {lo}..={hi}")]
    IndexOutOfRange { index: u64, lo: u64, hi: u64 },

    #[error("access out of range: node {node}, offset {offset}, length {len} (capacity {cap})")]
    OutOfRange {
        node: usize,
        offset: u64,
        len: u64,
        cap: u64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("code error: {0}")]
    Code(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("replay contract violation: {0}")]
    Replay(String),

    #[error("phase terminated early at index {0}; compressed state is only defined for completed phases")]
    PhaseIncomplete(usize),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}
