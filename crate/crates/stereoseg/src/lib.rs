//! Stereo depth features for pixelwise scene labelling.

pub mod dataset;
pub mod encodings;
pub mod error;
pub mod geometry;
pub mod mininet;
pub mod raster;
pub mod synthscene;
pub mod stereo;

pub use error::{Error, Result};
