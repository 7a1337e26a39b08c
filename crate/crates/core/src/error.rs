use thiserror::Error;

/// Errors raised by the segmentation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("not enough points for clustering: {points} points, {k} clusters")]
    TooFewPoints { points: usize, k: usize },

    #[error("degenerate lattice: {0}")]
    DegenerateLattice(String),
}

pub type Result<T> = std::result::Result<T, SegError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SegError {
    SegError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
