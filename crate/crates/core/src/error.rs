use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Candidate-set generation needs at least three classes.
    #[error("invalid arity: {classes} classes (need at least 3)")]
    InvalidArity { classes: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: [usize; 2],
        found: [usize; 2],
    },

    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("backward called on a non-scalar node of shape {shape:?}")]
    NonScalarRoot { shape: [usize; 2] },

    #[error("node {node} does not require gradients")]
    NoGradient { node: usize },

    #[error("NaN encountered in {0}")]
    NanInput(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// The candidate set carries zero predicted mass, so no pseudo-target exists.
    #[error("pseudo-target has zero mass on the candidate set")]
    DegenerateMass,

    #[error("covariance matrix is not symmetric (max deviation {deviation:e})")]
    AsymmetricCovariance { deviation: f64 },

    #[error("dataset invariant violated at instance {index}: {reason}")]
    InvalidDataset { index: usize, reason: &'static str },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
