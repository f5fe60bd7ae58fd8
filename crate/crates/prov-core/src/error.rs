//! Crate-wide error type and result alias.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid identifier {id:?}: {reason}")]
    InvalidId { id: String, reason: &'static str },

    #[error("invalid attribute {name:?}: {reason}")]
    InvalidAttribute { name: String, reason: &'static str },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("unknown node {0:?}")]
    UnknownNode(String),

    #[error("edge {edge_id:?}: {reason}")]
    EdgeViolation { edge_id: String, reason: String },

    #[error("graph contains a cycle through {0:?}")]
    CycleDetected(String),

    #[error("invalid entry: {0}")]
    InvalidEntry(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("store is sealed; batch rejected")]
    StoreSealed,

    #[error("store has no persistence path")]
    NoPersistencePath,

    #[error("corrupt snapshot at {path}: {reason}")]
    CorruptSnapshot { path: PathBuf, reason: String },

    #[error("malformed event {event_id}: {reason}")]
    MalformedEvent { event_id: u64, reason: String },

    #[error("start node not found: {0:?}")]
    StartNotFound(String),

    #[error("connection refused: {0}")]
    ConnectionRefused(String),

    #[error("connection reset by peer")]
    ConnectionReset,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attach a human-readable context to a raw I/O error.
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
