use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame dimensions {found:?} do not match expected {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("frame must be at least 2x2 pixels, got {0}x{1}")]
    FrameTooSmall(usize, usize),

    #[error("pixel buffer has {found} values, expected {expected}")]
    BufferLength { expected: usize, found: usize },

    #[error("non-finite intensity at pixel index {0}")]
    NonFinite(usize),

    #[error("frame times must be strictly increasing ({prev} then {next})")]
    NonIncreasingTimes { prev: f64, next: f64 },

    #[error("duplicate frame time {0}")]
    DuplicateTime(f64),

    #[error("node has {found} points, need at least {needed}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("sequence has {found} frames, need at least {needed}")]
    SequenceTooShort { needed: usize, found: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate degrees of freedom: {leaves} non-empty leaves for {pixels} pixels")]
    DegenerateDof { leaves: usize, pixels: usize },

    #[error("theta^2 must be positive, got {0}")]
    NonPositiveTheta(f64),

    #[error(
        "bracket [{low}, {high}] does not straddle target ARL {target}: \
         ARL(low) = {arl_low}, ARL(high) = {arl_high}"
    )]
    Bracket {
        low: f64,
        high: f64,
        arl_low: f64,
        arl_high: f64,
        target: f64,
    },

    #[error("time {t} lies outside the observed range [{min}, {max}]")]
    Extrapolation { t: f64, min: f64, max: f64 },

    #[error("intensities are globally constant; cannot rescale")]
    DegenerateRange,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig(message.into())
    }
}
