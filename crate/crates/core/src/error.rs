//! Error type shared across the crate.
//!
//! Variants are grouped so a caller (e.g. the CLI) can map them onto coarse
//! categories: invalid input/config, data acquisition, degenerate numerics.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data violated a contract (shape, range, binary-ness).
    #[error("validation error: {0}")]
    Validation(String),

    /// Architecture string could not be parsed; `token_index` is 0-based.
    #[error("architecture parse error at token {token_index}: {message}")]
    ArchParse { token_index: usize, message: String },

    /// All output potentials were nonpositive, so class probabilities are
    /// undefined for this presentation.
    #[error("degenerate output: all output potentials nonpositive")]
    DegenerateOutput,

    /// Malformed IDX payload; `offset` is the byte where parsing failed.
    #[error("idx parse error at byte {offset}: {message}")]
    Idx { offset: usize, message: String },

    /// Cached or downloaded file does not match its pinned SHA-256.
    #[error("checksum mismatch for {name}: expected {expected}, got {actual}")]
    ChecksumMismatch {
        name: String,
        expected: String,
        actual: String,
    },

    /// Offline mode was requested and the cache has no usable copy.
    #[error("cache miss (offline): {path}")]
    CacheMiss { path: String },

    /// All download sources failed for a file.
    #[error("download failed for {name}: {message}")]
    Download { name: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Serialized model/config is structurally valid JSON but violates the
    /// schema (unknown version, wrong array lengths, ...).
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
