use thiserror::Error;

/// Errors produced by the kernel, propagation and control-operator routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("potential sample at x = {x} is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { x: f64, asymmetry: f64 },

    #[error("sample grid is not uniform near x = {x}")]
    NonUniformGrid { x: f64 },

    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("point (x = {x}, t = {t}) lies outside the triangle 0 <= x <= t <= {horizon}")]
    OutsideTriangle { x: f64, t: f64, horizon: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Picard iteration did not converge after {iterations} sweeps (last change {last_change:.3e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("diagonal block {index} of the Volterra system is singular; refine N")]
    SingularBlock { index: usize },

    #[error("matching of the decaying solution failed: K(0) is numerically singular")]
    SingularWeylMatching,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("control is not identically zero near t = 0 (|f| = {value:.3e} at t = {t})")]
    ControlSupport { t: f64, value: f64 },

    #[error("{n} nodes exceed the dense SVD cap of {cap}")]
    DenseCap { n: usize, cap: usize },

    #[error("horizon mismatch: {0} vs {1}")]
    HorizonMismatch(f64, f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
