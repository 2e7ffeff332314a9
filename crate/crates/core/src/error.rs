use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Laguerre degree {degree} exceeds the stability bound {bound}")]
    DegreeTooLarge { degree: usize, bound: usize },

    #[error("Lamb-Dicke expansion only covers |m - n| <= 2 (got m = {m}, n = {n})")]
    ExpansionOrder { m: usize, n: usize },

    #[error("quadrature did not converge: estimate {estimate:e} > tolerance {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("amplitudes are not normalized: sum |r|^2 = {norm}")]
    NotNormalized { norm: f64 },

    #[error("basis too large: {modes} single-particle modes (limit {limit})")]
    BasisTooLarge { modes: usize, limit: usize },

    #[error("recycling kernel is not positive semidefinite: eigenvalue {eigenvalue:e}")]
    KernelNotPsd { eigenvalue: f64 },

    #[error("integrator step size underflow at t = {time} (dt = {dt:e})")]
    StepUnderflow { time: f64, dt: f64 },

    #[error("density matrix lost positivity at t = {time}: min eigenvalue {min_eigenvalue:e}")]
    Positivity { time: f64, min_eigenvalue: f64 },

    #[error("outside the asymptotic regime: t = {t} but need t >= {required}")]
    Regime { t: f64, required: f64 },

    #[error("config error(s):\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
