use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Both outcome classes are required but only one is present.
    #[error("labels contain a single class ({0})")]
    SingleClass(u8),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Whether the error stems from bad user input rather than a failure
    /// while running a valid request.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::InvalidConfig(_)
            | Error::SingleClass(_)
            | Error::Parse { .. } => true,
            Error::Csv(e) => !matches!(e.kind(), csv::ErrorKind::Io(_)),
            Error::Numerical(_) | Error::Io(_) => false,
        }
    }
}

/// Non-fatal conditions raised while fitting a model.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum Warning {
    /// Newton iterations stopped without meeting the gradient tolerance,
    /// typically because the classes are separable.
    NotConverged { iterations: usize },
    /// A beta calibration map with a negative shape parameter is not monotone.
    NonMonotoneBeta { a: f64, b: f64 },
    /// No admissible split existed at the root, so every tree is a single leaf.
    DegenerateForest,
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::NotConverged { iterations } => {
                write!(f, "logistic fit did not converge after {iterations} iterations")
            }
            Warning::NonMonotoneBeta { a, b } => {
                write!(f, "beta map is not monotone (a = {a}, b = {b})")
            }
            Warning::DegenerateForest => write!(f, "no valid split at the root; trees are single leaves"),
        }
    }
}
