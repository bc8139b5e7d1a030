use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric fault: non-finite value produced by {0}")]
    NumericFault(&'static str),
    #[error("root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("checkpoint format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(AutodiffError::Shape(msg.into()))
}
