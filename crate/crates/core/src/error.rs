//! Error type shared across the crate.

use std::path::PathBuf;

/// Convenience alias used by every fallible API in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced while loading, validating, or processing attribution data.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure, annotated with the path involved when known.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A binary matrix file did not start with the expected `AMAT` magic.
    #[error("{path}: not an attribution matrix file (bad magic)")]
    BadMagic { path: PathBuf },

    /// A binary matrix file declared a format version we do not support.
    #[error("{path}: unsupported format version {found} (expected {expected})")]
    BadVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    /// File contents ended early or carried trailing bytes.
    #[error("{path}: truncated or oversized payload ({detail})")]
    BadPayload { path: PathBuf, detail: String },

    /// CSV cell that could not be parsed as a finite float, with location.
    #[error("{path}: row {row}, column {col}: {detail}")]
    BadCell {
        path: PathBuf,
        row: usize,
        col: usize,
        detail: String,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Structurally valid input that violates a documented invariant
    /// (dimension mismatch, empty matrix, overlapping partition, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A requested budget that cannot be satisfied by the given matrix.
    #[error("budget {requested} exceeds available rows {available}")]
    BudgetTooLarge { requested: usize, available: usize },
}

impl Error {
    /// Wrap an `io::Error` with the path that produced it.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Shorthand for an [`Error::Invalid`] with a formatted message.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
