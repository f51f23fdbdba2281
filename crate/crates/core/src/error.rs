use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on the arguments does not hold.
    InvalidInput(String),
    /// Two things that must agree in length do not.
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// Image-shaped inputs disagree in width/height.
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// Least-squares depth alignment has no unique minimizer.
    IllPosed { support: usize },
    /// Camera configuration admits no epipolar geometry.
    DegenerateGeometry(String),
    /// Failure inside one chunk of the autoregressive loop.
    Chunk { chunk: usize, source: Box<Error> },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::LengthMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what} length mismatch: expected {expected}, found {found}"),
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::IllPosed { support } => {
                write!(f, "ill-posed depth alignment (support {support})")
            }
            Error::DegenerateGeometry(msg) => write!(f, "degenerate geometry: {msg}"),
            Error::Chunk { chunk, source } => write!(f, "chunk {chunk}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Chunk { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
