use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KibamError {
    #[error("invalid battery parameters: {0}")]
    InvalidParams(String),

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("argument {x} outside the domain of the {branch} Lambert W branch")]
    OutOfDomain { branch: &'static str, x: f64 },

    #[error("state of charge ({a}, {b}) lies outside [0, {amax}] x [0, {bmax}]")]
    OutsideBox {
        a: f64,
        b: f64,
        amax: f64,
        bmax: f64,
    },

    #[error("state of charge must be positive, got ({a}, {b})")]
    NonPositiveSoc { a: f64, b: f64 },

    #[error("invalid load model: {0}")]
    InvalidLoad(String),

    #[error("invalid initial distribution: {0}")]
    InvalidInit(String),

    #[error("invalid Markov task process: {0}")]
    InvalidModel(String),

    #[error(
        "quadrature did not converge: estimated error {error:e} exceeds tolerance {tolerance:e}"
    )]
    Quadrature { error: f64, tolerance: f64 },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for KibamError {
    fn from(err: std::io::Error) -> Self {
        KibamError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, KibamError>;
