//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid disparity {0} (must be positive)")]
    InvalidDisparity(f64),

    #[error("pixel ({u}, {v}) outside image bounds {width}x{height}")]
    OutOfBounds { u: f64, v: f64, width: u32, height: u32 },

    #[error("column {u} minus disparity {d} falls outside row of length {len}")]
    DisparityOutOfRange { u: usize, d: usize, len: usize },

    #[error("dimension mismatch: {expected} vs {actual} ({context})")]
    DimensionMismatch { expected: String, actual: String, context: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("encoding {kind} needs channels [{expected}], got [{actual}]")]
    EncodingArity { kind: String, expected: String, actual: String },

    #[error("primitive {index} spans disparities [{d_lo:.3}, {d_hi:.3}], outside [{limit_lo}, {limit_hi}]")]
    PrimitiveOutOfRange { index: usize, d_lo: f64, d_hi: f64, limit_lo: f64, limit_hi: f64 },

    #[error("unmapped color ({r}, {g}, {b}) at pixel ({u}, {v})")]
    UnknownColor { r: u8, g: u8, b: u8, u: u32, v: u32 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("inconsistent container: {0}")]
    Consistency(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoAt { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    pub(crate) fn dims(
        expected: (u32, u32),
        actual: (u32, u32),
        context: impl Into<String>,
    ) -> Self {
        Error::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
            context: context.into(),
        }
    }
}
