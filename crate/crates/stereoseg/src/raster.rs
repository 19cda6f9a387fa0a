//! 8-bit raster plumbing shared by the matchers, encoders and renderer.

use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel 8-bit image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, pixels: vec![0; width as usize * height as usize] }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width as usize * height as usize,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> u8 {
        self.pixels[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: u8) {
        self.pixels[v as usize * self.width as usize + u as usize] = value;
    }

    pub fn row(&self, v: u32) -> &[u8] {
        let w = self.width as usize;
        &self.pixels[v as usize * w..(v as usize + 1) * w]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Flip left-right, e.g. for the matcher mirror-equivariance checks.
    pub fn flipped_horizontal(&self) -> GrayImage {
        let mut out = GrayImage::new(self.width, self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                out.set(u, v, self.get(self.width - 1 - u, v));
            }
        }
        out
    }

    /// Load from PNG; color inputs are reduced to luminance.
    pub fn load_png(path: &Path) -> Result<Self> {
        let rgb = RgbImage::load_png(path)?;
        Ok(rgb.to_luma())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: image::ImageBuffer<image::Luma<u8>, Vec<u8>> =
            image::ImageBuffer::from_raw(self.width, self.height, self.pixels.clone())
                .expect("pixel count matches dimensions");
        buf.save(path)?;
        Ok(())
    }
}

/// Three-channel 8-bit image stored planar (R, G, B).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    planes: [Vec<u8>; 3],
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, planes: [vec![0; n], vec![0; n], vec![0; n]] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> [u8; 3] {
        let i = v as usize * self.width as usize + u as usize;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, rgb: [u8; 3]) {
        let i = v as usize * self.width as usize + u as usize;
        self.planes[0][i] = rgb[0];
        self.planes[1][i] = rgb[1];
        self.planes[2][i] = rgb[2];
    }

    pub fn plane(&self, channel: usize) -> &[u8] {
        &self.planes[channel]
    }

    /// ITU-R BT.601 luminance, integer arithmetic with round-half-up.
    pub fn to_luma(&self) -> GrayImage {
        let n = self.planes[0].len();
        let mut pixels = Vec::with_capacity(n);
        for i in 0..n {
            let r = self.planes[0][i] as u32;
            let g = self.planes[1][i] as u32;
            let b = self.planes[2][i] as u32;
            pixels.push(((299 * r + 587 * g + 114 * b + 500) / 1000) as u8);
        }
        GrayImage { width: self.width, height: self.height, pixels }
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let dyn_img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io_at(path, io),
            other => Error::Image(other),
        })?;
        let rgb = dyn_img.to_rgb8();
        let (width, height) = (rgb.width(), rgb.height());
        let mut out = RgbImage::new(width, height);
        for (u, v, p) in rgb.enumerate_pixels() {
            out.set(u, v, p.0);
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf = image::RgbImage::new(self.width, self.height);
        for (u, v, p) in buf.enumerate_pixels_mut() {
            p.0 = self.get(u, v);
        }
        buf.save(path)?;
        Ok(())
    }
}

/// Round-half-up to a byte; inputs are expected in [0, 255].
#[inline]
pub(crate) fn round_half_up_u8(x: f64) -> u8 {
    debug_assert!((-0.5..=255.5).contains(&x));
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}
