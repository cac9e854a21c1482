use alloc::string::String;

use crate::data::Device;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("no event templates for device {0}")]
    EmptyPool(Device),
    #[error(
        "{candidates} basis candidates exceed the budget of {budget}; lower max_span or subsample days"
    )]
    BudgetExceeded { candidates: usize, budget: usize },
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("numeric failure: {0}")]
    Numeric(&'static str),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
}

impl Error {
    pub(crate) fn shape(expected: impl core::fmt::Display, found: impl core::fmt::Display) -> Self {
        use alloc::string::ToString;
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
