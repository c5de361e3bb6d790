use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum MvpError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("parse error in {what} at byte {offset}: {detail}")]
    ParseAt {
        what: String,
        offset: usize,
        detail: String,
    },

    #[error("parse error in {what} at line {line}: {detail}")]
    ParseLine {
        what: String,
        line: usize,
        detail: String,
    },

    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MvpError>;

impl MvpError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        MvpError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        MvpError::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MvpError::Io {
            path: path.into(),
            source,
        }
    }
}
