use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The channel realization has an all-zero direct link, or the rate
    /// targets cannot be met from the given starting point.
    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("feasibility construction unavailable: {0}")]
    Unavailable(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("slot {slot}: {source}")]
    AtSlot {
        slot: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn at_slot(self, slot: u64) -> Self {
        Error::AtSlot {
            slot,
            source: Box::new(self),
        }
    }

    /// Innermost error, with slot context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtSlot { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
