use alloc::string::String;

/// Errors raised by the registration core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("missing attribute `{attribute}`: {hint}")]
    MissingAttribute {
        attribute: &'static str,
        hint: &'static str,
    },

    #[error("insufficient data: need at least {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("points are not in acquisition order at index {index}")]
    NotOrdered { index: usize },

    #[error("trajectory error: {0}")]
    Trajectory(String),

    #[error("coarse registration failed: {0}")]
    CoarseFailure(String),

    #[error("fine registration failed: {0}")]
    FineFailure(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
