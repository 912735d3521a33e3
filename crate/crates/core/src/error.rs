use thiserror::Error;

/// Errors raised by the simulation and experiment routines.
///
/// The variants split into two families: parameter validation problems
/// (bad input, caller's fault) and numerical failures (the computation ran
/// but could not meet its contract). The CLI maps them to distinct exit codes
/// through [`Error::is_numerical`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("brownian path is frozen; refinement is not permitted")]
    FrozenPath,

    #[error("interval index {index} out of range for a path with {len} samples")]
    InvalidIndex { index: usize, len: usize },

    #[error("time {time} is not a sampled time of the path")]
    UnsampledTime { time: f64 },

    #[error("requested horizon {requested} exceeds the path horizon {available}")]
    HorizonTooShort { requested: f64, available: f64 },

    #[error("word length {requested} exceeds the configured cap {cap}")]
    CapExceeded { requested: usize, cap: usize },

    #[error("pole: evaluation of a negative power of z at z = 0")]
    Pole,

    #[error("refinement depth {max_depth} exceeded on interval [{start}, {end}]")]
    MaxDepthExceeded { max_depth: u32, start: f64, end: f64 },

    #[error("path needs at least {needed} samples in [0, {horizon}], found {found}")]
    InsufficientRefinement { needed: usize, found: usize, horizon: f64 },

    #[error("empty trace")]
    EmptyTrace,

    #[error("malformed path file: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::MaxDepthExceeded { .. } | Error::Pole | Error::InsufficientRefinement { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
