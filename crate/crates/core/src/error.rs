use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs violate an operation's structural contract (lengths, ordering, overlap).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("size limit exceeded: {0}")]
    Size(String),

    /// A sampled HCIZ integrand fell outside the permutation extrema.
    #[error("claim violation: F(U) = {value} outside [{min}, {max}]")]
    ClaimViolation { value: f64, min: f64, max: f64 },

    #[error("numerical integrity error: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Regression input contains values that cannot be log-transformed.
    #[error("data error: non-positive values at t = {times:?}")]
    Data { times: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, Error>;
