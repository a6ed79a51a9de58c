use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid {family} parameters: {constraint}")]
    InvalidParameters {
        family: &'static str,
        constraint: String,
    },

    #[error("invalid tabulated density: {0}")]
    Tabulated(String),

    #[error("quadrature did not converge on [{lower}, {upper}] (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error: f64,
    },

    #[error("drift is not centred: integral of b*p = {0:e}")]
    Centering(f64),

    #[error("model construction failed: {0}")]
    Construction(String),

    #[error("closed-form coefficients unavailable for {0}; use build_coefficient_numeric")]
    Unsupported(String),

    #[error("Stein solution singular: a({x}) = {a:e}")]
    Singular { x: f64, a: f64 },

    #[error("point {0} lies on the support boundary")]
    Boundary(f64),

    #[error("hypothesis check failed: {0}")]
    Hypothesis(String),

    #[error("covariance matrix is not positive semi-definite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("gradient evaluation failed at {point:?}")]
    Gradient { point: Vec<f64> },

    #[error("sample {value} at index {index} falls outside the support ({lower}, {upper})")]
    SupportViolation {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("integration blew up at step {step} (state {state})")]
    Blowup { step: usize, state: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
