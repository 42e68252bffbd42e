//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by estimators, data generation, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or batch shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Bad user-supplied configuration (unknown model id, invalid schedule, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid argument to a numeric routine.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training failed at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// Local-linear smoother has too little effective data near the target.
    #[error("degenerate neighborhood at u0={u0}: fewer than 2 distinct points with kernel weight > {min_weight}")]
    DegenerateNeighborhood { u0: f64, min_weight: f64 },

    /// No sphere in the grid contains any data point.
    #[error("criterion undefined: every sphere in the grid is empty")]
    CriterionUndefined,

    /// The Cartesian sphere grid would exceed the configured resource cap.
    #[error("infeasible dimension: {0}")]
    InfeasibleDimension(String),

    /// Bandwidth selection failed for every candidate pair.
    #[error("bandwidth selection failed for all candidates: {0}")]
    Selection(String),

    /// A per-coefficient regression failed.
    #[error("fitting basis coefficient {index} failed: {message}")]
    CoefficientFit { index: usize, message: String },

    /// Operation requires a fitted model.
    #[error("model not fitted: {0}")]
    State(String),

    /// Index out of the valid range.
    #[error("index out of range: {0}")]
    Index(String),

    /// Operation does not support this data model (e.g. multivariate response).
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
