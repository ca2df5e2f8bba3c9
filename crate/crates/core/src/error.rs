use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("uniform draw {0} outside the open interval (0, 1)")]
    UniformOutOfRange(f64),

    #[error("detector index must be 0 or 1, got {0}")]
    InvalidDetector(u8),

    #[error("sample {0} is not wrapped into (-pi, pi]")]
    UnwrappedSample(f64),

    #[error("not enough samples: need at least {needed}, have {have}")]
    InsufficientSamples { needed: u64, have: u64 },

    #[error("outcome has zero probability under the current posterior (normalizer {0:e})")]
    ZeroProbabilityOutcome(f64),

    #[error(
        "squeezed fixed point unstable: X*e^(2r)/8 = {0:.4} must be below 1"
    )]
    UnstableFixedPoint(f64),

    #[error("unknown {kind} `{value}`")]
    UnknownLabel { kind: &'static str, value: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{context}: {message}")]
    Io { context: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
