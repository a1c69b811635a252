use std::path::PathBuf;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} (line {line}, column {column}): {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid {entity}: {message}")]
    Invariant { entity: String, message: String },

    #[error("unknown object id `{0}`")]
    UnknownObject(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("degenerate rectifier fit: {0}")]
    DegenerateFit(String),

    #[error("frame window [{start}, {end}) is outside the {available} recorded frames")]
    FrameWindow {
        start: usize,
        end: usize,
        available: usize,
    },

    #[error("object `{object}` has no pose at t = {time}")]
    MissingPose { object: String, time: f64 },

    #[error("loss term `{0}` is not finite")]
    NonFiniteLoss(&'static str),

    #[error("non-finite gradient for primitive {primitive} in view `{view}`")]
    NonFiniteGradient { primitive: usize, view: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("covariance is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("camera `{0}` is an evaluation view and cannot be read during training")]
    EvalViewAccess(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invariant(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            entity: entity.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
