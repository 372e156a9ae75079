use alloc::string::String;

/// Errors raised by constructors and numerical routines of the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("intensity must be nonnegative: {0}")]
    NegativeIntensity(String),

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("reversed interval [{0}, {1}]")]
    ReversedInterval(f64, f64),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("dimension {dim} exceeds the configured cap {cap}")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("spectral point outside the admissible set: {0}")]
    OutsideAdmissibleSet(String),

    #[error("scheme instability at step {step}: {detail}")]
    Instability { step: u64, detail: String },

    #[error("time {0} is not a multiple of the step size")]
    OffGrid(f64),

    #[error("zero input: {0}")]
    ZeroInput(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
