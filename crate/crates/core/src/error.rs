//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Error`]. Variants are grouped by
//! how a caller should react: usage/configuration mistakes, malformed input
//! data, numeric failures, and I/O.

use thiserror::Error;

/// Unified error for tensor, model, data, and training operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimension mismatch in a tensor or layer operation.
    #[error("dimension error: {0}")]
    Dim(String),

    /// Invalid configuration value (hyperparameter, CLI/config key).
    #[error("config error: {0}")]
    Config(String),

    /// Non-finite value produced or encountered where finiteness is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed input data file (protocol line, score line, checkpoint).
    #[error("parse error: {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Unsupported or corrupt binary format (WAV, checkpoint container).
    #[error("format error: {0}")]
    Format(String),

    /// Operation invalid in the current state (e.g. fingerprint mismatch).
    #[error("state error: {0}")]
    State(String),

    /// Structurally valid input whose content is unusable (empty waveform,
    /// score set missing a class, negative duration).
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dim(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 2 for usage, configuration,
    /// or unusable input; 3 for numeric failures; 1 for other runtime
    /// failures (I/O, internal shape mismatches).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::State(_)
            | Error::Data(_) => 2,
            Error::Numeric(_) => 3,
            _ => 1,
        }
    }
}
