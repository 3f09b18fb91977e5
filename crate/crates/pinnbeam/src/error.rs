//! Error taxonomy shared across the crate.
//!
//! Errors are grouped by what the caller can do about them: `Usage` means the
//! caller violated an API contract (wrong tape, dimension mismatch, invalid
//! configuration), `NonFinite` means a numeric operation left the reals,
//! `Parse`/`Validation` cover data ingestion, and `Io` wraps filesystem
//! failures with the offending path.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// API misuse: mixing tapes, mismatched dimensions, invalid specs.
    #[error("usage error: {0}")]
    Usage(String),

    /// A numeric operation produced or encountered a non-finite value.
    #[error("non-finite value in {context} (node {node:?})")]
    NonFinite {
        context: &'static str,
        node: Option<u32>,
    },

    /// Malformed input data; `line` is 1-based within the offending file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Structurally valid data that violates a semantic requirement.
    #[error("validation error: {0}")]
    Validation(String),

    /// Training failed to produce a usable model (non-finite loss, dead line
    /// search at the very first step, and similar).
    #[error("training divergence: {0}")]
    Divergence(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
