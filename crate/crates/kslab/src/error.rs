//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("elliptic solve did not meet residual contract: relative residual {residual:e} > tol {tol:e}")]
    EllipticResidual { residual: f64, tol: f64 },

    #[error("scheme failure at t={t}: {reason}")]
    SchemeFailure { t: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("no admissible truncation level below overflow limit (g grows too slowly numerically): needs lnln(N+e) = {required:.3}")]
    TruncationOverflow { required: f64 },

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KsError>;

impl KsError {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            KsError::Config(_) | KsError::InvalidArgument(_) | KsError::InvalidGrid(_) => 2,
            _ => 3,
        }
    }
}
