//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the steering library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not line up.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A context vector was requested from an empty sample set or phrase.
    #[error("empty context set: at least one sample is required")]
    EmptyContextSet,

    /// A tap index outside the model's declared tap points.
    #[error("unknown tap point {tap}: valid taps are 0..={max}")]
    Tap { tap: usize, max: usize },

    /// Invalid or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// A token id outside the fixed vocabulary.
    #[error("token id {token} outside vocabulary of size {vocab_size}")]
    Vocab { token: u32, vocab_size: usize },

    /// A sequence does not fit the model's context window.
    #[error("sequence of length {len} exceeds context length {max}")]
    ContextLength { len: usize, max: usize },

    /// Lookup of a context vector that is not cached.
    #[error("context cache miss: no entry for layer {layer}, label {label:?}")]
    CacheMiss { layer: usize, label: String },

    /// A context cache file that cannot be decoded.
    #[error("context cache format error: {0}")]
    CacheFormat(String),

    /// Invalid configuration values.
    #[error("config error: {0}")]
    Config(String),

    /// A checkpoint, dataset, or table file that cannot be decoded.
    #[error("format error: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
