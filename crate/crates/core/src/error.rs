use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("midi parse error: {0}")]
    Midi(String),
    #[error("piece is empty")]
    EmptyPiece,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("standardizer has not been calibrated")]
    NotCalibrated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
