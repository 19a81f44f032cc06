//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by dataset ingestion, neighbor search, model selection,
/// spectral diagnostics, and the verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    WriteIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A CSV cell failed to parse as a finite number. Row and column are
    /// 1-based and count the header row if one is present.
    #[error("{path}: row {row}, column {col}: expected a finite number, found {found:?}")]
    CsvCell {
        path: String,
        row: usize,
        col: usize,
        found: String,
    },

    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    CsvShape {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: {message}")]
    Json { path: String, message: String },

    #[error("dataset needs at least 2 rows, got {n}")]
    TooFewRows { n: usize },

    #[error("dataset needs at least 1 coordinate column plus a response column")]
    TooFewColumns,

    #[error("response column {col} out of range for {ncols} columns")]
    ResponseColumnOutOfRange { col: usize, ncols: usize },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    /// Grid designs need n to be a perfect d-th power.
    #[error(
        "grid design needs n to be a perfect {d}-th power; n = {n} is not \
         (nearest candidates: {below} and {above})"
    )]
    GridSize {
        n: usize,
        d: usize,
        below: usize,
        above: usize,
    },

    #[error("k = {k} out of range 1..={k_max}")]
    KOutOfRange { k: usize, k_max: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("data checksum mismatch for {path}: model was fitted on different data")]
    ChecksumMismatch { path: String },

    #[error("experiment specs are not comparable: {0}")]
    MismatchedExperiments(String),

    #[error("resource cap exceeded: needs {needed} table cells, cap is {cap}")]
    ResourceCap { needed: u64, cap: u64 },
}

/// Coarse classification used by callers that map errors to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// I/O and file-format failures.
    Parse,
    /// Semantic validation failures (bad ranges, mismatched shapes, stale models).
    Validation,
    /// A configured resource cap was hit; partial results may exist.
    Resource,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. }
            | Error::WriteIo { .. }
            | Error::CsvCell { .. }
            | Error::CsvShape { .. }
            | Error::Json { .. } => ErrorClass::Parse,
            Error::ResourceCap { .. } => ErrorClass::Resource,
            _ => ErrorClass::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
