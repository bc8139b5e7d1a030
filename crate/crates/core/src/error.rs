use std::path::PathBuf;

use hg_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HairError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid bust model: {0}")]
    InvalidBust(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric fault: {0}")]
    NumericFault(String),
    #[error("directional ambiguity unresolved: {0}")]
    AmbiguityUnresolved(String),
    #[error("orientation diffusion underconstrained: no pixel reaches confidence {0}")]
    DiffusionUnderconstrained(f64),
    #[error("empty shape: occupancy field has no surface at iso {0}")]
    EmptyShape(f64),
    #[error("no valid strand seeds on the scalp inside the shape")]
    NoSeed,
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<AutodiffError> for HairError {
    fn from(e: AutodiffError) -> Self {
        match e {
            AutodiffError::NumericFault(op) => HairError::NumericFault(op.to_string()),
            AutodiffError::Format(m) => HairError::Format {
                path: PathBuf::new(),
                msg: m,
            },
            other => HairError::Shape(other.to_string()),
        }
    }
}

impl HairError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HairError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        HairError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, HairError>;
