//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range (node_count {bound})")]
    NodeOutOfRange { index: u64, bound: u64 },

    #[error("edge type {index} out of range (edge_type_count {bound})")]
    TypeOutOfRange { index: u32, bound: u32 },

    #[error("edge ({src}, {dst}) has an empty type list")]
    EmptyTypeList { src: u64, dst: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("class id {index} out of range (class_count {bound})")]
    ClassOutOfRange { index: u32, bound: u32 },

    #[error("{0}")]
    InvalidInput(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("instance-of parent {0} has no cluster assignment")]
    UnmappedParent(String),

    #[error("training diverged: non-finite loss at epoch {epoch} (last finite loss {last_finite})")]
    Diverged { epoch: usize, last_finite: f64 },

    #[error("checksum mismatch for {path}: manifest {expected}, file {got}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        got: String,
    },

    #[error("malformed {format} data at line {line}: {reason}")]
    Malformed {
        format: &'static str,
        line: usize,
        reason: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
