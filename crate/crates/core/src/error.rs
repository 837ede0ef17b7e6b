use thiserror::Error;

use crate::estimators::FitCurve;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    #[error("need at least {required} observations, got {actual}")]
    TooFewObservations { required: usize, actual: usize },

    #[error("xs has {xs} values but ys has {ys}")]
    LengthMismatch { xs: usize, ys: usize },

    #[error("non-finite value at observation {index}")]
    NonFiniteValue { index: usize },

    #[error("operation needs response values (regression mode)")]
    MissingResponse,

    #[error("operation expects density data without response values")]
    UnexpectedResponse,

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("polynomial degree must be 0, 1 or 2, got {0}")]
    InvalidDegree(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("kernel weight mass {mass:e} at x = {at} is numerically zero for h = {h}")]
    DegenerateFit { at: f64, h: f64, mass: f64 },

    #[error("no bandwidth up to {h_max} satisfies the hypothesis")]
    NoSatisfyingBandwidth { h_max: f64, curve: Option<Box<FitCurve>> },

    #[error("unknown simulation function `{0}`")]
    UnknownFunction(String),
}
