use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image too small: {width}x{height} (need at least {min}x{min})")]
    DimensionTooSmall { width: usize, height: usize, min: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("rect {x0},{y0} {w}x{h} is outside a {width}x{height} image")]
    OutOfBounds {
        x0: usize,
        y0: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("canny thresholds must satisfy low < high (got low={low}, high={high})")]
    ThresholdOrder { low: f64, high: f64 },

    #[error("ellipse fit needs at least 5 points, got {0}")]
    InsufficientPoints(usize),

    #[error("degenerate point configuration: {0}")]
    Degenerate(&'static str),

    #[error("all ring samples fall outside the image")]
    SamplesOutOfBounds,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by unreadable, malformed or unusable input
    /// rather than by a fault in the pipeline itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Decode { .. }
                | Error::InvalidImage(_)
                | Error::DimensionTooSmall { .. }
                | Error::InvalidParameter(_)
                | Error::InvalidScene(_)
                | Error::ThresholdOrder { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
