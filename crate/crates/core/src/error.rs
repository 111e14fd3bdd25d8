use std::io;

use thiserror::Error;

/// Errors produced by the index library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("element kind mismatch: expected {expected:?}, got {actual:?}")]
    KindMismatch {
        expected: crate::ElementKind,
        actual: crate::ElementKind,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("vertex {id} out of range (active count {active})")]
    VertexOutOfRange { id: u32, active: usize },

    #[error("adjacency invariant violated for vertex {vertex}: {reason}")]
    Adjacency { vertex: u32, reason: String },

    #[error("id range {start}..{end} overlaps active vertices (active count {active})")]
    RangeOverlap {
        start: usize,
        end: usize,
        active: usize,
    },

    #[error("capacity exceeded: need {needed}, capacity {capacity}")]
    Capacity { needed: usize, capacity: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}
