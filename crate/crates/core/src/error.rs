use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("affine matrix is singular (det = {0:e})")]
    SingularMatrix(f64),

    #[error("stack has no foreground voxels eligible for sampling")]
    EmptyForeground,

    #[error("positive sample left the volume after {0} retries")]
    OutOfVolume(usize),

    #[error("crop of side {side} at ({x}, {y}) does not fit a {width}x{height} raster")]
    OutOfBounds {
        x: i64,
        y: i64,
        side: usize,
        width: usize,
        height: usize,
    },

    #[error("section of {height}x{width} px is smaller than the {tile} px tile")]
    SectionSmallerThanTile { height: usize, width: usize, tile: usize },

    #[error("primitives {0} and {1} overlap")]
    OverlappingPrimitives(usize, usize),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
