use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A model broke one of its own contracts (e.g. probabilities that do not normalize).
    #[error("model invariant violated: {0}")]
    ModelInvariant(String),

    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),

    /// A premise of a derivation does not hold for the supplied model.
    #[error("premise violated: {0}")]
    PremiseViolation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
