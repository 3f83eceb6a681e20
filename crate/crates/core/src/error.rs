use std::path::PathBuf;

use thiserror::Error;

use crate::conic::SolveStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("KKT system could not be factorized ({0}); rescale the problem or loosen tolerances")]
    NumericalBreakdown(String),

    #[error("conic solver finished with status {status:?} while {context}")]
    SolverFailure {
        context: &'static str,
        status: SolveStatus,
    },

    #[error("invalid sparsity: 2*k ({twice_k}) must be below the parameter dimension ({dim})")]
    InvalidSparsity { twice_k: usize, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("offline noise column {row} exceeded its l2 budget after {attempts} draws")]
    NoiseBudgetExceeded { row: usize, attempts: usize },

    #[error("BPDN residual budget {budget} is below the distance from the data to range(A)")]
    InfeasibleBudget { budget: f64 },

    #[error("invalid bounds at coordinate {index}: lower {lower} > upper {upper}")]
    InvalidBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },

    #[error("polytope is unbounded along the requested direction")]
    UnboundedDirection,

    #[error("vertex enumeration limited to dimension {limit}, got {dim}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("point-estimate domain is empty: the feasible parameter set and the sparse set do not intersect")]
    EmptyDomain,

    #[error("MPC problem infeasible at t = {t} (status {status:?})")]
    InfeasibleAtRuntime { t: usize, status: SolveStatus },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed FSPS file {path}: {reason}")]
    FspsFormat { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::dim(context, expected, actual))
    }
}
