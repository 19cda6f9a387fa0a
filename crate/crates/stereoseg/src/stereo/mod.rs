//! Dense stereo correspondence.
//!
//! Two matchers share the same contract: rectified 8-bit pair in, per-pixel
//! disparity plus validity mask out. [`sgbm_disparity`] aggregates a
//! sampling-insensitive pixel cost along one-dimensional paths under a
//! smoothness penalty; [`asw_disparity`] aggregates a truncated
//! absolute-difference cost over bilateral support windows with no smoothness
//! prior. Both apply a winner margin test and a left-right consistency check,
//! and neither fills holes: pixels that fail stay invalid.

mod asw;
mod bt;
mod sgbm;

pub use asw::{asw_disparity, asw_support_weight};
pub use bt::bt_cost;
pub use sgbm::sgbm_disparity;

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::RgbImage;

/// Default disparity search range, in pixels.
pub const DEFAULT_D_MIN: u32 = 1;
pub const DEFAULT_D_MAX: u32 = 64;

/// Fixed-point scale used by the 16-bit disparity PNG convention.
pub const DISPARITY_PNG_SCALE: f32 = 256.0;

/// Per-pixel disparity with a validity mask.
///
/// Invalid pixels carry disparity 0 and are excluded from every downstream
/// encoding. Disparity is stored as a real number even though both matchers
/// currently emit integer winners.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: u32,
    height: u32,
    disparity: Vec<f32>,
    valid: Vec<bool>,
    d_min: f32,
    d_max: f32,
}

impl DisparityMap {
    /// All-invalid map over the given search range.
    pub fn new_invalid(width: u32, height: u32, d_min: f32, d_max: f32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, disparity: vec![0.0; n], valid: vec![false; n], d_min, d_max }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Search range this map was produced with.
    pub fn range(&self) -> (f32, f32) {
        (self.d_min, self.d_max)
    }

    #[inline]
    fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    /// Disparity at (u, v), or `None` when the pixel is invalid.
    #[inline]
    pub fn get(&self, u: u32, v: u32) -> Option<f32> {
        let i = self.index(u, v);
        self.valid[i].then(|| self.disparity[i])
    }

    #[inline]
    pub fn is_valid(&self, u: u32, v: u32) -> bool {
        self.valid[self.index(u, v)]
    }

    /// Mark (u, v) valid with the given disparity.
    pub fn set(&mut self, u: u32, v: u32, d: f32) -> Result<()> {
        if !(self.d_min..=self.d_max).contains(&d) {
            return Err(Error::InvalidParams(format!(
                "disparity {d} outside [{}, {}]",
                self.d_min, self.d_max
            )));
        }
        let i = self.index(u, v);
        self.disparity[i] = d;
        self.valid[i] = true;
        Ok(())
    }

    pub fn invalidate(&mut self, u: u32, v: u32) {
        let i = self.index(u, v);
        self.disparity[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / self.valid.len() as f64
    }

    /// Store as 16-bit PNG: `round(d * 256)` per pixel, 0 reserved for invalid.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u16> = Vec::with_capacity(self.disparity.len());
        for i in 0..self.disparity.len() {
            if self.valid[i] {
                let q = (self.disparity[i] * DISPARITY_PNG_SCALE + 0.5).floor();
                buf.push(q.clamp(1.0, u16::MAX as f32) as u16);
            } else {
                buf.push(0);
            }
        }
        let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(self.width, self.height, buf)
                .expect("pixel count matches dimensions");
        img.save(path)?;
        Ok(())
    }

    /// Inverse of [`save_png`](Self::save_png). The search range is not part
    /// of the file; callers supply the one the map was computed with.
    pub fn load_png(path: &Path, d_min: f32, d_max: f32) -> Result<Self> {
        let dyn_img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io_at(path, io),
            other => Error::Image(other),
        })?;
        let img = dyn_img.to_luma16();
        let mut map = DisparityMap::new_invalid(img.width(), img.height(), d_min, d_max);
        for (u, v, p) in img.enumerate_pixels() {
            if p.0[0] != 0 {
                let i = map.index(u, v);
                map.disparity[i] = p.0[0] as f32 / DISPARITY_PNG_SCALE;
                map.valid[i] = true;
            }
        }
        Ok(map)
    }

    /// Debug visualization: near = red, far = blue, invalid = black.
    pub fn false_color(&self) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        let span = (self.d_max - self.d_min).max(1e-6);
        for v in 0..self.height {
            for u in 0..self.width {
                let i = self.index(u, v);
                if !self.valid[i] {
                    continue;
                }
                let t = ((self.disparity[i] - self.d_min) / span).clamp(0.0, 1.0);
                let ramp = |x: f32| (255.0 * x.clamp(0.0, 1.0)) as u8;
                img.set(u, v, [ramp(t * 2.0), ramp(1.0 - (2.0 * t - 1.0).abs()), ramp(2.0 - t * 2.0)]);
            }
        }
        img
    }
}

/// Path-aggregation matcher parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SgbmParams {
    pub d_min: u32,
    pub d_max: u32,
    /// Small penalty for one-pixel disparity steps along a path.
    pub p1: u32,
    /// Large penalty for bigger jumps; must exceed `p1`.
    pub p2: u32,
    /// Number of aggregation directions, 4 or 8.
    pub num_paths: u32,
    /// Winner margin, percent: the best cost must undercut every cost more
    /// than one disparity away by this ratio or the pixel is invalidated.
    pub uniqueness_ratio: u32,
    /// Maximum left/right disagreement in pixels before invalidation.
    pub lr_max_diff: f32,
}

impl Default for SgbmParams {
    fn default() -> Self {
        Self {
            d_min: DEFAULT_D_MIN,
            d_max: DEFAULT_D_MAX,
            p1: 8,
            p2: 32,
            num_paths: 8,
            uniqueness_ratio: 10,
            lr_max_diff: 1.0,
        }
    }
}

impl SgbmParams {
    /// Strict configuration-file validation. The matcher itself also accepts
    /// `p1 == p2 == 0`, which degenerates to per-pixel winner-take-all and is
    /// useful as a test oracle, so only this entry point enforces `p2 > p1 > 0`.
    pub fn validate(&self) -> Result<()> {
        self.validate_range()?;
        if !(self.p2 > self.p1 && self.p1 > 0) {
            return Err(Error::InvalidParams(format!(
                "penalties must satisfy p2 > p1 > 0, got p1={} p2={}",
                self.p1, self.p2
            )));
        }
        Ok(())
    }

    pub(crate) fn validate_range(&self) -> Result<()> {
        if self.d_min == 0 || self.d_min > self.d_max {
            return Err(Error::InvalidParams(format!(
                "bad disparity range [{}, {}]",
                self.d_min, self.d_max
            )));
        }
        if self.num_paths != 4 && self.num_paths != 8 {
            return Err(Error::InvalidParams(format!(
                "num_paths must be 4 or 8, got {}",
                self.num_paths
            )));
        }
        if self.p2 < self.p1 {
            return Err(Error::InvalidParams("p2 must be >= p1".into()));
        }
        Ok(())
    }
}

/// Bilateral support-window matcher parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AswParams {
    /// Support window half-size; the window spans `2r + 1` pixels per side.
    pub window_radius: u32,
    /// Intensity-similarity falloff.
    pub gamma_color: f32,
    /// Spatial-proximity falloff, in pixels.
    pub gamma_spatial: f32,
    pub d_min: u32,
    pub d_max: u32,
    pub lr_max_diff: f32,
    /// Winner margin, percent, as in [`SgbmParams::uniqueness_ratio`]. Without
    /// it a textureless pair ties every candidate and the left-right check
    /// alone cannot reject the (meaningless) agreeing winners.
    pub uniqueness_ratio: u32,
}

impl Default for AswParams {
    fn default() -> Self {
        Self {
            window_radius: 16,
            gamma_color: 14.0,
            gamma_spatial: 17.5,
            d_min: DEFAULT_D_MIN,
            d_max: DEFAULT_D_MAX,
            lr_max_diff: 1.0,
            uniqueness_ratio: 10,
        }
    }
}

impl AswParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_radius < 1 {
            return Err(Error::InvalidParams("window_radius must be >= 1".into()));
        }
        if self.gamma_color <= 0.0 || self.gamma_spatial <= 0.0 {
            return Err(Error::InvalidParams("gammas must be positive".into()));
        }
        if self.d_min == 0 || self.d_min > self.d_max {
            return Err(Error::InvalidParams(format!(
                "bad disparity range [{}, {}]",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }
}

/// Truncation level for the absolute-difference raw cost used by the
/// support-weight matcher.
pub(crate) const TAD_TRUNCATION: u8 = 40;
