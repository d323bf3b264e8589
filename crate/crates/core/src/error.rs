use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("pencil violation: {0}")]
    PencilViolation(String),

    #[error("matrix is not rank 2 (|det| = {det:e} after normalization)")]
    NotRank2 { det: f64 },

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("point ({x}, {y}) is outside the {width}x{height} image")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("profile lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("every line of the pencil was filtered out")]
    EmptyPencil,

    #[error("no candidate epipolar line pairs survived matching")]
    NoCandidates,

    #[error("no hypothesis survived screening")]
    NoValidHypothesis,

    #[error("argument out of range: {0}")]
    DomainError(String),

    #[error("need {needed} points with the requested separation, found {available}")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
