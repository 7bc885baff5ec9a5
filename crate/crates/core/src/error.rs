use std::path::PathBuf;

use thiserror::Error;

use crate::mpc::ExecutionTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("covariance is not positive definite at frame {frame}, joint {joint}")]
    NotPositiveDefinite { frame: usize, joint: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("misaligned time grids: {0}")]
    Misaligned(String),

    #[error("solver failure: {0}")]
    Solver(String),

    /// A receding-horizon run stopped because one of its solves failed.
    /// The trace holds everything executed before the failure.
    #[error("solver failure at t = {time:.3} s: {message}")]
    MpcAborted {
        time: f64,
        message: String,
        partial: Box<ExecutionTrace>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the optimizer itself (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::Solver(_) | Error::MpcAborted { .. })
    }
}

pub(crate) fn ensure_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}
