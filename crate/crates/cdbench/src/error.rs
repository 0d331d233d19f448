use thiserror::Error;

/// Every fallible operation in the bench reports through this type.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid space specification: {0}")]
    InvalidSpace(String),

    #[error("node cap exceeded: requested {requested}, cap {cap}")]
    NodeCap { requested: usize, cap: usize },

    #[error("non-finite potential value at node {0}")]
    NonFinitePotential(usize),

    #[error("node index {index} out of range (space has {len} nodes)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid curvature pair: {0}")]
    InvalidCurvature(String),

    #[error("analytic curvature unavailable: {0}")]
    NoAnalyticCurvature(String),

    #[error("every node was filtered by the gradient floor")]
    AllFiltered,

    #[error("eigensolver failed with LAPACK info = {0}")]
    Eigensolve(i32),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("generator is not symmetric in L2(mu): defect {0:e}")]
    NotSymmetric(f64),

    #[error("invalid time parameter: {0}")]
    InvalidTime(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("transport problem infeasible: {0}")]
    Infeasible(String),

    #[error("transport support size {size} exceeds cap {cap}")]
    SupportCap { size: usize, cap: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("scenario error in stage `{stage}`: {message}")]
    Scenario { stage: &'static str, message: String },

    #[error("cache file error: {0}")]
    Cache(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        BenchError::Io { path: path.into(), source }
    }
}
