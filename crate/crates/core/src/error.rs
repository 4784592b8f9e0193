use std::path::PathBuf;

use crate::report::PruningReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {op} got {left} and {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("invalid network: {0}")]
    Network(String),

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("parse error at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    ParseLine {
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("representation error at layer {layer}: {message}")]
    Representation { layer: usize, message: String },

    #[error("index error: {0}")]
    Index(String),

    #[error("criterion not applicable at layer {layer}: {message}")]
    CriterionInapplicable { layer: usize, message: String },

    #[error("surgery error between layers {from} and {to}: {message}")]
    Surgery { from: usize, to: usize, message: String },

    #[error("pipeline aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        #[source]
        source: Box<Error>,
        partial: Box<PruningReport>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
