use alloc::string::String;
use thiserror::Error;

/// Errors raised by model validation and the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("negative weight at index {index}: {value}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("weights sum to {sum}, expected 1 within {tolerance}")]
    NotNormalized { sum: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("the target has no density at t + eps^2 = 0")]
    ZeroVariance,

    #[error("components {first} and {second} share the same center")]
    DuplicateCenters { first: usize, second: usize },

    #[error("quadrature backend needs a one-dimensional symmetric equal-weight two-point model")]
    UnsupportedBackend,

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(&'static str),

    #[error("K = {steps} is below the minimal admissible step count {min_steps}")]
    TooFewSteps { steps: usize, min_steps: usize },

    #[error("step index {index} outside 1..={steps}")]
    StepOutOfRange { index: usize, steps: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{0}")]
    Domain(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
