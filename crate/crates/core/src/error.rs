use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("universe mismatch: {left} vs {right} elements")]
    UniverseMismatch { left: usize, right: usize },

    #[error("universe of {requested} elements exceeds the supported maximum of {max}")]
    UniverseTooLarge { requested: usize, max: usize },

    #[error("element {element} is outside a universe of {size} elements")]
    ElementOutOfRange { element: usize, size: usize },

    #[error("capacity exceeded for {what}: need {needed}, limit {limit}")]
    Capacity {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no support member is consistent with the observation (Z_Y = 0)")]
    NoConsistentSignal,

    #[error("spread factor is unbounded: no nonempty set has positive probability")]
    UnboundedSpread,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn capacity(what: &'static str, needed: u128, limit: u128) -> Self {
        Error::Capacity {
            what,
            needed,
            limit,
        }
    }

    /// Whether this error reflects an enumeration budget rather than bad input.
    pub fn is_capacity(&self) -> bool {
        matches!(
            self,
            Error::Capacity { .. } | Error::UniverseTooLarge { .. }
        )
    }
}
