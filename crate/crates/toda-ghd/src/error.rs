//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// `|alpha|` too small for the dressing operator to be invertible.
    #[error("degenerate parameters: |alpha| = {alpha:e} is below 1e-8")]
    DegenerateParameters { alpha: f64 },
    /// Site or eigen-index outside the lattice.
    #[error("index {index} outside [{lo}, {hi}]")]
    IndexOutOfRange { index: i64, lo: i64, hi: i64 },
    /// A vanishing coupling below the right edge makes the position increment infinite.
    #[error("singular gap: a = 0 at interior site {site}")]
    SingularGap { site: i64 },
    /// Adaptive step size collapsed.
    #[error("step size underflow at t = {t}: h = {h:e} (last error norm {err_norm:e})")]
    StepUnderflow { t: f64, h: f64, err_norm: f64 },
    /// Iterative eigensolver exceeded its iteration cap.
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    /// Evaluation point too close to a pole.
    #[error("near-singular evaluation: {0}")]
    NearSingular(String),
    /// Linear operator numerically singular.
    #[error("singular operator: {0}")]
    OperatorSingular(String),
    /// A numerical self-consistency check failed.
    #[error("inconsistency: {0}")]
    Inconsistency(String),
    /// Query outside the tabulated range.
    #[error("out of range: {0}")]
    OutOfRange(String),
    /// Invalid experiment or module configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Requested snapshot not recorded.
    #[error("missing snapshot: {0}")]
    MissingSnapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
