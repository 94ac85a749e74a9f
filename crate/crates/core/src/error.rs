use thiserror::Error;

use crate::dsl::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("config key `{key}`: {constraint}")]
    ConfigKey { key: String, constraint: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("evaluation failed at {context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },

    #[error("point outside envelope box on axis {axis}: {value} not in [{lower}, {upper}]")]
    Domain {
        axis: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("envelope box too small: minimizer reached the box boundary at {point:?}; rerun with a larger box")]
    BoxTooSmall { point: Vec<f64> },

    #[error("tree has {nodes} paths, exceeding budget {budget}")]
    BudgetExceeded { nodes: u128, budget: u128 },

    #[error("terminal condition below barrier on path {path}: S_T = {barrier} > xi = {terminal}")]
    Compatibility {
        path: usize,
        barrier: f64,
        terminal: f64,
    },

    #[error("rank-deficient regression at step {step} with basis `{basis}` (condition number {condition:e})")]
    RankDeficient {
        step: usize,
        basis: String,
        condition: f64,
    },

    #[error("sandwich ordering violated at iterate {iterate}, path {path}, step {step} (margin {margin:e})")]
    SandwichViolation {
        iterate: usize,
        path: usize,
        step: usize,
        margin: f64,
    },

    #[error("hypothesis {hypothesis} not satisfied: {detail}")]
    Hypothesis { hypothesis: String, detail: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {what} at index {index:?}")]
    NonFinite { what: String, index: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn eval(context: impl Into<String>, source: EvalError) -> Self {
        Error::Eval {
            context: context.into(),
            source,
        }
    }
}
