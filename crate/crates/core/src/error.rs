use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("ray length {n1} rejected: {reason}")]
    RayLength { n1: usize, reason: String },

    #[error("invalid gluing edge: {0}")]
    Gluing(String),

    #[error("non-positive weight {value} at index {index}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("invalid perturbation: {0}")]
    Perturbation(String),

    #[error("non-radial perturbation on the cusp: {0}")]
    NonRadial(String),

    #[error("dimension {dim} exceeds the dense cap {cap}; use the sector path or reduce N1")]
    DenseCap { dim: usize, cap: usize },

    #[error("operator is not flagged Hermitian in its weighted product")]
    NotHermitian,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("singular factorization at pivot {0}")]
    Singular(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
