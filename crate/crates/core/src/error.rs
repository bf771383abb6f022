use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller broke a documented precondition (dimensions, Hermiticity, ranges).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Eigenvalue below the negative positivity tolerance.
    #[error("positivity violation: eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    Positivity { eigenvalue: f64, tolerance: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Coefficient magnitude crossed the divergence guard.
    #[error("coefficient f{component} diverged (|f| = {magnitude:e}) at t = {t}, s = {s}{}", .s1.map(|v| format!(", s1 = {v}")).unwrap_or_default())]
    Divergence {
        component: usize,
        magnitude: f64,
        t: f64,
        s: f64,
        s1: Option<f64>,
    },

    /// Density-matrix hygiene broken during propagation.
    #[error("integrator failure at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
