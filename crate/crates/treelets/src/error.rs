//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by matrix construction, model fitting and simulation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Fewer observations than the estimator requires.
    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// A NaN or infinity showed up where a finite value is required.
    #[error("invalid data: non-finite value in {context}")]
    NonFinite { context: String },

    /// A variance on the diagonal fell at or below the variance floor.
    /// `column` is 1-based, matching the reporting convention of the CLI.
    #[error("degenerate variance at column {column}: {variance:e} <= {floor:e}")]
    DegenerateVariance {
        column: usize,
        variance: f64,
        floor: f64,
    },

    /// A pair of coordinate indices was equal or out of range.
    #[error("invalid index pair ({i}, {j}) for dimension {dim}")]
    InvalidPair { i: usize, j: usize, dim: usize },

    /// A tree level outside `0..=max_level` was requested.
    #[error("level {level} out of range (max level {max_level})")]
    LevelOutOfRange { level: usize, max_level: usize },

    /// Vector or matrix shape does not match what the operation expects.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Loading vectors that must span a plane were (near-)collinear.
    #[error("degenerate construction: {0}")]
    DegenerateConstruction(String),

    /// The normal equations of a least-squares fit were singular.
    #[error("singular fit: {0}")]
    SingularFit(String),

    /// Every candidate feature was degenerate, so nothing could be selected.
    #[error("empty selection: all candidate features are degenerate")]
    EmptySelection,

    /// A model or configuration parameter violated its invariants.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// An iterative routine failed to converge.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Malformed serialized model or report.
    #[error("parse error: {0}")]
    Parse(String),
}
