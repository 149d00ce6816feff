use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A request referenced an item, chunk, node or level outside the configured system.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid; `key` names the offending setting.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// The cache would hold more chunks than its capacity.
    #[error("capacity exceeded: {used} chunks in a cache of {capacity}")]
    Capacity { used: usize, capacity: usize },

    /// A read needs more chunks than the surviving data and parity chunks can supply.
    #[error("item {item} is irrecoverable: {missing} chunks unavailable with {parity} parity chunks")]
    Irrecoverable {
        item: usize,
        missing: usize,
        parity: usize,
    },

    /// The market-clearing loop exceeded its round budget.
    #[error("market did not clear within {rounds} rounds (partition {partition:?})")]
    NonTermination { rounds: usize, partition: Vec<usize> },

    /// The offline optimum was refused because the partition count bound is too large.
    #[error("instance too large: partition bound {bound} exceeds the limit {limit}")]
    TooLarge { bound: u128, limit: u128 },

    /// Malformed tabular or structured input.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
