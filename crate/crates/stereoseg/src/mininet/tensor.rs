//! Dense CHW tensor in f64.
//!
//! Training runs in double precision so finite-difference gradient checks
//! resolve to ~1e-8; checkpoints store 32-bit reals (see `checkpoint`).

use crate::encodings::MultiChannelImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "({channels}, {height}, {width}) needs {} elements, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    /// Bytes scaled to [0, 1], one channel per plane.
    pub fn from_multichannel(img: &MultiChannelImage) -> Self {
        let (c, h, w) =
            (img.channel_count(), img.height() as usize, img.width() as usize);
        let mut data = Vec::with_capacity(c * h * w);
        for plane in img.planes() {
            data.extend(plane.values().iter().map(|&b| b as f64 / 255.0));
        }
        Self { channels: c, height: h, width: w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Channel plane as a contiguous slice.
    pub fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(2, 3, 4, vec![0.0; 24]).is_ok());
        assert!(Tensor::from_vec(2, 3, 4, vec![0.0; 23]).is_err());
    }

    #[test]
    fn indexing_is_chw() {
        let mut t = Tensor::zeros(2, 2, 3);
        t.set(1, 0, 2, 7.0);
        assert_eq!(t.data()[1 * 6 + 0 * 3 + 2], 7.0);
        assert_eq!(t.get(1, 0, 2), 7.0);
    }
}
