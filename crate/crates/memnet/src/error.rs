//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by tensor math, memories, environments and file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// Two tensor shapes that were required to agree did not.
    #[error("{op}: dimension mismatch: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// An input value outside the mathematical domain of an operation.
    #[error("{op}: domain error: {msg}")]
    Domain { op: &'static str, msg: String },

    /// An index past the end of whatever it indexes.
    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// An operation that only one model variant supports was called on the other.
    #[error("variant error: {0}")]
    Variant(String),

    /// Sampling from a short-term memory with no stored samples.
    #[error("short-term memory is empty")]
    EmptyMemory,

    /// A caller-side contract violation that is not a shape problem.
    #[error("{op}: contract violation: {msg}")]
    Contract { op: &'static str, msg: String },

    /// A malformed binary file (checkpoint or IDX).
    #[error("{path}: format error at byte {offset}: {msg}")]
    Format {
        path: String,
        offset: u64,
        msg: String,
    },

    /// An underlying I/O failure.
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dimension(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
