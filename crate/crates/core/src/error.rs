use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    /// An integrand produced a non-finite value.
    #[error("quadrature failed: {0}")]
    Quadrature(String),

    /// The setup has no well-defined answer (zero curvature, zero weight mass, ...).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("moment of order {order} does not exist for alpha = {alpha}")]
    MomentDoesNotExist { order: u32, alpha: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("replicate failed (alpha = {alpha}, index = {index}): {source}")]
    Replicate {
        alpha: f64,
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidArgument(_)
            | Error::LengthMismatch { .. }
            | Error::MomentDoesNotExist { .. }
            | Error::Empty(_) => true,
            Error::Replicate { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
