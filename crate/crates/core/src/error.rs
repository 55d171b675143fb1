use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid level specification: {0}")]
    InvalidLevelSpec(String),

    #[error("mesh is disconnected: vertex {unreachable} cannot be reached from vertex {source_vertex}")]
    DisconnectedMesh {
        source_vertex: usize,
        unreachable: usize,
    },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("convergence failure: {0}")]
    ConvergenceFailure(String),

    #[error("invalid eigenpair count k={k} for a problem of dimension {n}")]
    InvalidK { k: usize, n: usize },

    #[error("landmark {0} listed more than once")]
    DuplicateLandmark(usize),

    #[error("index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("feature set is empty")]
    EmptyFeatureSet,

    #[error("diffusion basis Gram matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditionedGram(f64),

    #[error("conformal factor must be positive (min entry {0:.3e})")]
    NonpositiveConformalFactor(f64),

    #[error("line search failed after {0} trials")]
    LineSearchFailure(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
