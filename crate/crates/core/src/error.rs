use thiserror::Error;

use crate::oa::OaOutcome;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input")]
    EmptyInput,

    #[error("line {line}: expected {expected} columns, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        line: usize,
        column: usize,
        value: String,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("labels must be -1 or +1, found {0}")]
    InvalidLabel(f64),

    #[error("no feasible support satisfies the constraints")]
    Infeasible,

    #[error("outer approximation stopped after {iterations} iterations with gap {gap:.3e}")]
    NotConverged {
        iterations: usize,
        gap: f64,
        incumbent: Box<OaOutcome>,
    },

    #[error("enumeration of {count} supports exceeds the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("simplex failed: {0}")]
    Simplex(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(&'static str),

    #[error("datasets are not neighbors: they differ in {0} rows")]
    NotNeighbors(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
