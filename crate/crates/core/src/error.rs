use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Equirectangular payloads must have `width == 2 * height`.
    #[error("expected an equirectangular raster with width = 2 * height, got {width}x{height}")]
    Aspect { width: usize, height: usize },

    /// Two operands that must share dimensions do not.
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    /// A buffer length does not agree with the declared shape.
    #[error("buffer of length {len} does not match shape {shape}")]
    BufferLength { len: usize, shape: String },

    #[error("array view is not contiguous row-major (shape {shape:?}, strides {strides:?})")]
    NonContiguous { shape: Vec<usize>, strides: Vec<isize> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The catadioptric projection is undefined at the projection pole z = 1.
    #[error("point lies on the projection pole (z = 1)")]
    ProjectionPole,

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("no valid pixels to aggregate")]
    EmptyMask,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("density value {value} at pixel {index} is not below 1")]
    DensityOutOfRange { index: usize, value: f64 },

    #[error("unknown augmentation strategy `{0}` (expected v1 or v2)")]
    UnknownStrategy(String),

    #[error("bad format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// True for errors caused by the file system rather than the content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
            || matches!(self, Error::Image { source: image::ImageError::IoError(_), .. })
    }

    /// True for shape, aspect or on-disk format problems.
    pub fn is_shape_or_format(&self) -> bool {
        matches!(
            self,
            Error::Aspect { .. }
                | Error::ShapeMismatch { .. }
                | Error::BufferLength { .. }
                | Error::NonContiguous { .. }
                | Error::Format { .. }
        ) || matches!(self, Error::Image { source, .. } if !matches!(source, image::ImageError::IoError(_)))
    }
}
