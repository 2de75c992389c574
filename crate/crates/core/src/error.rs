use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The input cannot be repaired or used (e.g. fewer than two observed samples).
    #[error("unrecoverable input: {0}")]
    Input(String),
    /// A parameter is outside its valid domain.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    /// Tensor or series shapes disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A fused tensor was assembled without one of its components.
    #[error("missing component: {0}")]
    MissingComponent(&'static str),
    /// Transform metadata is missing or inconsistent with the tensor.
    #[error("transform metadata: {0}")]
    Meta(String),
    /// Statistics are undefined because the input has zero variance.
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    /// A computation produced NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter { name, reason: reason.into() }
}
