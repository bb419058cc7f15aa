//! Crate-wide error type.
//!
//! One enum rather than per-module errors so the CLI can map every failure
//! onto its documented exit codes in a single place.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible; names the operation and both shapes.
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A precondition that is not a shape mismatch was violated.
    #[error("{0}")]
    Invalid(String),

    /// Config file or `--set` override failed to parse.
    #[error("config error at {source_name} line {line}: {msg}")]
    Config {
        source_name: String,
        line: usize,
        msg: String,
    },

    /// Data file failed to parse; positions are 1-based.
    #[error("{path} row {row}, column {col}: {msg}")]
    Csv {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },

    /// A fixed or sampled strategy refers to a value the space does not hold.
    #[error("strategy {param}={value} is not an option of the strategy space")]
    StrategyNotInSpace { param: &'static str, value: u32 },

    #[error("non-finite gradient while {context}")]
    NonFiniteGradient { context: String },

    /// Training aborted on a non-finite loss. `checkpoint` is the last good
    /// parameter snapshot, when one was written.
    #[error("training diverged at epoch {epoch}, batch {batch}{}",
            .checkpoint.as_ref().map(|p| format!(" (last good checkpoint: {})", p.display())).unwrap_or_default())]
    Diverged {
        epoch: usize,
        batch: usize,
        checkpoint: Option<PathBuf>,
    },

    #[error("strategy space has {size} joint strategies, enumeration limit is {limit}")]
    SpaceTooLarge { size: usize, limit: usize },

    #[error("metrics contain no epochs")]
    EmptyMetrics,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
