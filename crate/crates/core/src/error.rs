use thiserror::Error;

use crate::engine::RunTrace;

/// Failure modes of an inner (approximate `A0^{-1}`) solve.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InnerSolveError {
    #[error("A0 singular: zero pivot in column {pivot}")]
    Singular { pivot: usize },
    #[error("BiCGSTAB breakdown ({quantity} vanished) after {iterations} iterations")]
    Breakdown {
        quantity: &'static str,
        iterations: usize,
    },
    #[error("no convergence in {iterations} iterations: relative residual {achieved:e} > {tol:e}")]
    NotConverged {
        achieved: f64,
        tol: f64,
        iterations: usize,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("evaluator unavailable for this matrix family")]
    EvaluatorUnavailable,
    #[error("scale factor must be positive, got {0}")]
    InvalidScale(f64),
    #[error("block vector has no active blocks")]
    EmptyBlockVector,
    #[error("right-hand side has zero norm")]
    ZeroRhs,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("inner solve failed at outer iteration {iteration}: {source}")]
    InnerSolve {
        iteration: usize,
        #[source]
        source: InnerSolveError,
        /// Rows completed before the failure.
        trace: Box<RunTrace>,
    },
    #[error(transparent)]
    Factorization(#[from] InnerSolveError),
    #[error("rank-deficient least-squares problem at mu = {mu}")]
    RankDeficient { mu: f64 },
    #[error("explicit companion dimension {dim} exceeds cap {cap}")]
    CapExceeded { dim: usize, cap: usize },
    #[error("{path}, line {line}: {msg}")]
    MatrixMarket {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("manifest {path}, term {term}: {msg}")]
    Manifest {
        path: String,
        term: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
