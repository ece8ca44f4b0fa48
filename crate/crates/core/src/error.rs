use thiserror::Error;

use crate::model::CpBtdModel;
use crate::solver::FitReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error(
        "infeasible regression: observation {row} has positive count but an all-zero design row"
    )]
    InfeasibleRow { row: usize },

    #[error("replicate `{replicate}` has zero minutes played")]
    ZeroMinutes { replicate: String },

    #[error("replicate {replicate} has an all-zero score column")]
    ZeroScoreColumn { replicate: usize },

    #[error("term {term} is inactive")]
    InactiveTerm { term: usize },

    #[error("both vectors are all zero")]
    EmptyComparison,

    #[error("dense tensor would have {cells} cells, above the limit of {limit}")]
    SizeGuard { cells: u128, limit: u128 },

    #[error(
        "EM needs {required} responsibilities, above the cap of {cap}; use the block Gauss-Seidel backend"
    )]
    MemoryGuard { required: usize, cap: usize },

    #[error("objective became non-finite at outer iteration {iteration}")]
    Diverged {
        iteration: usize,
        report: Box<FitReport>,
        model: Box<CpBtdModel>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
