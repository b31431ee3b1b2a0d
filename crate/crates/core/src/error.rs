use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A scalar parameter is outside its admissible range or not finite.
    InvalidParameter { name: &'static str, value: f64 },
    /// Dimensions of two operands disagree.
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    /// An argument violates a precondition that is not a single scalar.
    InvalidArgument(String),
    /// A loss component became NaN or infinite.
    NonFinite { what: &'static str, value: f64 },
    /// A backend call failed.
    Backend(String),
    /// A failure inside the optimization loop, tagged with where it happened.
    Run {
        iteration: usize,
        step: usize,
        source: Box<Error>,
    },
    /// Persisted state was written by an incompatible format version.
    Version { expected: u32, found: u32 },
}

impl Error {
    pub(crate) fn invalid_arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at(self, iteration: usize, step: usize) -> Self {
        match self {
            e @ Error::Run { .. } => e,
            e => Error::Run {
                iteration,
                step,
                source: Box::new(e),
            },
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, value } => {
                write!(f, "invalid parameter `{name}`: {value}")
            }
            Error::Shape {
                what,
                expected,
                actual,
            } => write!(f, "shape mismatch in {what}: expected {expected}, got {actual}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite { what, value } => write!(f, "non-finite {what}: {value}"),
            Error::Backend(msg) => write!(f, "backend failure: {msg}"),
            Error::Run {
                iteration,
                step,
                source,
            } => write!(f, "iteration {iteration}, step {step}: {source}"),
            Error::Version { expected, found } => {
                write!(f, "state format version {found} is not supported (expected {expected})")
            }
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Run { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
