use thiserror::Error;

use crate::contract::SaddleResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{utility} utility is undefined at argument {arg}")]
    Domain { utility: &'static str, arg: f64 },

    #[error("measure puts mass {mass} on atom {index} where the reference has none")]
    NotAbsolutelyContinuous { index: usize, mass: f64 },

    #[error("cdfs live on different knot grids")]
    KnotMismatch,

    #[error("{solver} did not converge: {detail}")]
    NoConvergence {
        solver: &'static str,
        detail: String,
        trace: Vec<f64>,
    },

    #[error("root not bracketed: {0}")]
    Bracket(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("successive convex programming hit the cap of {rounds} rounds")]
    IterationCap {
        rounds: usize,
        best: Box<SaddleResult>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Invalid(format!("config: {e}"))
    }
}
