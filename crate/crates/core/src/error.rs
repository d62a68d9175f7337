use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature did not converge: estimate {estimate}, error {error_estimate}")]
    Quadrature { estimate: f64, error_estimate: f64 },
    #[error("extrapolation did not converge: {0}")]
    Convergence(String),
    #[error("kernel evaluated on the diagonal")]
    Diagonal,
    #[error("covariance matrix not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("lattice of {sites} sites exceeds the cap of {cap}")]
    SizeCap { sites: usize, cap: usize },
    #[error("invalid window: {0}")]
    Window(String),
    #[error("window reduces to the insertion cell")]
    InsertionOverlap,
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("only {accepted} paths accepted, at least {required} required")]
    TooFewAccepted { accepted: usize, required: usize },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
