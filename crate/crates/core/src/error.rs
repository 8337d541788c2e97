use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("time must be positive, got t = {0}")]
    NonPositiveTime(f64),

    #[error("input is not mean-free (relative mean {0:.3e})")]
    NonZeroMean(f64),

    #[error("initial data is not localized in the box: boundary value {0:.3e} relative to amplitude")]
    NotLocalized(f64),

    #[error("time step {dt} exceeds stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("non-finite value encountered at t = {0}")]
    NonFinite(f64),

    #[error("containment violated: sqrt(t_end) = {sqrt_t:.3} > L/6 = {limit:.3}")]
    Containment { sqrt_t: f64, limit: f64 },

    #[error("integral diverges: integrand decays like s^{exponent} at {end}")]
    Divergent { exponent: f64, end: &'static str },

    #[error("missing coefficient: {0}")]
    MissingCoefficient(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("fit window too short: {0} samples, need at least {1}")]
    WindowTooShort(usize, usize),

    #[error("time {0} is outside the snapshot range")]
    OutOfRange(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("bad file format in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
