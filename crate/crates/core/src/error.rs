use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex not isolated: {0} is already placed in the forest")]
    VertexNotIsolated(usize),

    #[error("invalid separator: {separator:?} is not a subset of clique {clique}")]
    InvalidSeparator { clique: usize, separator: Vec<usize> },

    #[error("vertex {vertex} out of range for p = {p}")]
    VertexOutOfRange { vertex: usize, p: usize },

    #[error("clique index {0} out of range")]
    CliqueOutOfRange(usize),

    #[error("not PD: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("weight matrix has nonzero diagonal at index {0}")]
    NonZeroDiagonal(usize),

    #[error("incomplete forest: {placed} of {p} vertices placed")]
    IncompleteForest { placed: usize, p: usize },

    #[error("initial cliques are not a perfect sequence: {0}")]
    InvalidInitialCliques(String),

    #[error("column {column} has zero variance")]
    ZeroVariance { column: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
