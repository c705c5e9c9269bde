//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("geometry domain error: {0}")]
    Geometry(String),

    #[error("malformed sweep: {0}")]
    MalformedSweep(String),

    #[error("field-of-view intersection is empty: {0}")]
    NoFovOverlap(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("scene config error: {0}")]
    SceneConfig(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("no labeled points to evaluate")]
    NoLabeledPoints,

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: String, expected: &'static str },

    #[error("unsupported {kind} version {found} in {path} (minimum supported {min})")]
    UnsupportedVersion {
        kind: &'static str,
        path: String,
        found: u16,
        min: u16,
    },

    #[error("truncated file {path}: {section}")]
    Truncated { path: String, section: String },

    #[error("checkpoint/config mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
