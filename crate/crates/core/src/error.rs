use std::io;

use thiserror::Error;

/// Errors produced by the index, its file formats and its search routines.
#[derive(Debug, Error)]
pub enum ChessError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("metric {metric} cannot be applied to {kind} data")]
    IncompatibleMetric {
        metric: &'static str,
        kind: &'static str,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("sequence format error at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Sequence {
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("dataset hash mismatch: tree was built over {expected}, dataset is {found}")]
    HashMismatch { expected: String, found: String },

    #[error("corrupt block at byte offset {offset}: {message}")]
    Corrupt { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = ChessError> = std::result::Result<T, E>;

impl ChessError {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        ChessError::Precondition(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        ChessError::Format {
            offset,
            message: msg.into(),
        }
    }
}
