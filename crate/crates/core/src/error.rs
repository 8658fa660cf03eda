use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },

    #[error("matrix is empty or not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("KL divergence evaluated to {0:e}, below roundoff tolerance")]
    NegativeKl(f64),

    #[error("vertex {vertex} out of range for {dim} vertices")]
    VertexOutOfRange { vertex: usize, dim: usize },

    #[error("vertices must be distinct (got {0} twice)")]
    SameVertex(usize),

    #[error("zero variance on diagonal entry {0}")]
    ZeroVariance(usize),

    #[error("degenerate correlation {rho} between vertices {u} and {v}")]
    DegenerateCorrelation { u: usize, v: usize, rho: f64 },

    #[error("invalid spanning tree: {0}")]
    InvalidTree(String),

    #[error("need at least {min} vertices, got {got}")]
    TooFewVertices { min: usize, got: usize },

    #[error("exhaustive tree search supports at most {max} vertices, got {got}")]
    TooManyVertices { max: usize, got: usize },

    #[error("mixing matrix is rank deficient (rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },

    #[error("empirical covariance is singular: rank {rank} of {dim} from {samples} samples")]
    InsufficientSamples {
        dim: usize,
        rank: usize,
        samples: usize,
    },

    #[error("observation set is empty")]
    EmptyObservations,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
