//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CovotError {
    /// A vector with Euclidean norm ≤ 1e-12 cannot be normalized.
    #[error("vector {index} has norm {norm:.3e}, too close to zero to normalize")]
    ZeroVector { index: usize, norm: f64 },

    /// Two feature sets disagree on embedding dimension.
    #[error("feature dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A matrix has the wrong shape for the requested operation.
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// A vector has the wrong length for the requested operation.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// A positive marginal entry has no kernel support to place mass on.
    #[error("{axis} {index} has positive marginal but fully underflowed kernel support")]
    MarginalMismatch { axis: &'static str, index: usize },

    /// Instance exceeds an oracle's size cap.
    #[error("instance size {got} exceeds the {what} cap of {limit}")]
    TooLarge {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    /// Rejection sampling could not place well-separated prototypes.
    #[error("failed to draw separated prototypes after {attempts} attempts")]
    SeparationFailure { attempts: usize },

    /// A label or index lies outside its declared range.
    #[error("{what} {got} out of range [0, {bound})")]
    OutOfRange {
        what: &'static str,
        got: usize,
        bound: usize,
    },

    /// Every class has zero union; the metric mean is undefined.
    #[error("all classes have zero union; mIoU is undefined")]
    AllEmpty,

    /// The Sinkhorn iteration hit max_iters with Δv still above threshold.
    #[error("sinkhorn did not converge in {iterations} iterations (final Δv {final_delta_v:.3e})")]
    NotConverged {
        iterations: usize,
        final_delta_v: f64,
    },

    /// The training loss left the finite range.
    #[error("loss became non-finite at outer step {step}")]
    NonFiniteLoss { step: usize },

    /// A configuration or precondition check failed.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A numeric procedure aborted in a state it cannot recover from.
    #[error("numeric abort in {context}")]
    Numerical { context: &'static str },

    /// A text input could not be parsed.
    #[error("parse error at line {line}: {message}")]
    InvalidFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CovotError>;

impl CovotError {
    /// Helper for `InvalidParameter` with a formatted reason.
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        CovotError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
