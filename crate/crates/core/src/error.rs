use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state index {index} out of range for {size} states")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("rate for edge {from}->{to} must be positive and finite, got {rate}")]
    NonPositiveRate { from: usize, to: usize, rate: f64 },

    #[error("duplicate edge {from}->{to}")]
    DuplicateEdge { from: usize, to: usize },

    #[error("self-loop {0}->{0} is not a transition")]
    SelfLoop(usize),

    #[error("generator is the zero matrix")]
    ZeroGenerator,

    #[error("generator is reducible ({0} strongly connected components)")]
    Reducible(usize),

    #[error("detailed balance violated at pair ({m}, {n}): residual {residual:.3e}")]
    DetailedBalanceViolated { m: usize, n: usize, residual: f64 },

    #[error("stationary vector is not positive (component {index} = {value:.3e})")]
    NonPositiveStationary { index: usize, value: f64 },

    #[error("matrix is not Hermitian: residual {residual:.3e} exceeds {tol:.3e}")]
    NotHermitian { residual: f64, tol: f64 },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("eigensolver did not converge for the trailing block ending at index {0}")]
    NoConvergence(usize),

    #[error("spectrum has a single level: no gap")]
    NoGap,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("σ_({m},{n}) is nonzero but the ground-state component is zero; use the ergodicity report")]
    ZeroGroundComponent { m: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gave up after {0} attempts")]
    RejectionCap(usize),

    #[error("relaxation fit failed: {0}")]
    Fit(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
