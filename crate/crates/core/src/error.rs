use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("element {element}: {message}")]
    InvalidElement { element: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("element {element} inverted (det J = {det:e}) at step {step}")]
    Inversion { element: usize, det: f64, step: usize },

    #[error("non-finite or runaway displacement at step {step}")]
    Divergence { step: usize },

    #[error("time step {dt:e} s exceeds the critical step {critical:e} s")]
    Stability { dt: f64, critical: f64 },

    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 1,
            Error::Parse { .. } | Error::Config(_) | Error::Invalid(_) | Error::InvalidElement { .. } => 2,
            Error::Stability { .. } => 3,
            Error::Inversion { .. } => 4,
            Error::Divergence { .. } => 5,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attaches an element index to a plain validation error.
    pub(crate) fn at_element(self, element: usize) -> Self {
        match self {
            Error::Invalid(message) => Error::InvalidElement { element, message },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
