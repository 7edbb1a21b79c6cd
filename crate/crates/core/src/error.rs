use thiserror::Error;

/// Errors raised by the fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("point {index} is not a unit vector (norm {norm})")]
    NotUnitVector { index: usize, norm: f64 },

    #[error("points {first} and {second} coincide")]
    DuplicatePoints { first: usize, second: usize },

    #[error("InfeasibleDegree: degree {degree} not reached, residual {residual:e} above tolerance {tol:e}")]
    InfeasibleDegree {
        degree: usize,
        residual: f64,
        tol: f64,
    },

    #[error("IllConditioned: estimated condition number {condition:e}")]
    IllConditioned { condition: f64 },

    #[error("iteration diverged: {0}")]
    Divergence(String),

    #[error("data set carries no clean values")]
    MissingCleanValues,

    #[error("empty lambda grid: anchor {anchor:e} is below the floor {floor:e}")]
    EmptyGrid { anchor: f64, floor: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
