use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("graph regime violated: |grad h|_inf = {lip:.6} (must stay below 1)")]
    LipschitzViolation { lip: f64 },

    #[error("linear solver stalled after {iterations} iterations (relative residual {residual:.3e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("time step underflow at t = {t:.6e} (dt = {dt:.3e})")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("boundary contamination at t = {t:.6e}: outer-band ratio {ratio:.3e} exceeds {tolerance:.3e}")]
    Contamination { t: f64, ratio: f64, tolerance: f64 },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("fit: {0}")]
    Fit(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::LipschitzViolation { .. }
                | Error::SolverNonConvergence { .. }
                | Error::StepUnderflow { .. }
                | Error::Contamination { .. }
        )
    }

    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
