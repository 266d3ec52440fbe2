use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error in {path} at {position}: {message}")]
    Parse {
        path: PathBuf,
        position: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("requested {requested} modes but the correlation matrix has numerical rank {rank}")]
    Rank { requested: usize, rank: usize },

    #[error("rank-deficient least-squares system in {context}: mode {mode} is not identifiable")]
    RankDeficient { context: String, mode: usize },

    #[error("singular measurement covariance; linearly dependent sensors: {sensors:?}")]
    SingularCovariance { sensors: Vec<usize> },

    #[error("non-finite state during integration; last valid time {last_valid_time}")]
    BlowUp { last_valid_time: f64 },

    #[error("sensor error: {0}")]
    Sensor(String),

    #[error("time {time} outside data coverage [{start}, {end}]")]
    Extrapolation { time: f64, start: f64, end: f64 },

    #[error("linear dependence during orthonormalization of mode {mode}; try higher frequencies")]
    Orthonormalization { mode: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
