use thiserror::Error;

use crate::alpha_sampler::SampleTrace;

#[derive(Debug, Error)]
pub enum KdppError {
    #[error("index {index} out of range for {n} items")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("kernel entry ({i}, {j}) = {value} exceeds declared kappa^2 = {kappa_sq}")]
    KappaBoundViolated {
        i: usize,
        j: usize,
        value: f64,
        kappa_sq: f64,
    },

    #[error("matrix is not positive semi-definite (eigenvalue {min_eig} vs largest {max_eig})")]
    NotPsd { min_eig: f64, max_eig: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("dictionary is empty")]
    EmptyDictionary,

    #[error("requested subset size {k} is infeasible: {reason}")]
    InfeasibleSize { k: usize, reason: String },

    #[error("budget exhausted: {reason}")]
    BudgetExhausted {
        reason: String,
        trace: Option<Box<SampleTrace>>,
    },

    #[error("invalid configuration: {0}")]
    ConfigError(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KdppError>;
