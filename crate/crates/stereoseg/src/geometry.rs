//! Pinhole stereo camera model.
//!
//! Coordinate frame is image-aligned: +x right, +y down, +z forward. The
//! assumed ground plane sits at y = `camera_height_m` below the camera, so
//! upward-facing surfaces have normals with negative y.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 3D point in the camera-centered frame (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Calibrated stereo rig: shared intrinsics, metric baseline, and the mounting
/// height that anchors the assumed ground plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub focal_length_px: f64,
    pub baseline_m: f64,
    /// (cx, cy) in pixels.
    pub principal_point: (f64, f64),
    pub camera_height_m: f64,
    /// (width, height) in pixels.
    pub image_size: (u32, u32),
    /// Camera pitch relative to the ground frame; positive tilts the optics
    /// down. Defaults to zero (optical axis parallel to the ground plane).
    #[serde(default)]
    pub pitch_rad: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            focal_length_px: 500.0,
            baseline_m: 0.4,
            principal_point: (240.0, 180.0),
            camera_height_m: 1.5,
            image_size: (480, 360),
            pitch_rad: 0.0,
        }
    }
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        if self.focal_length_px <= 0.0 || self.baseline_m <= 0.0 || self.camera_height_m <= 0.0 {
            return Err(Error::InvalidParams(
                "focal_length_px, baseline_m and camera_height_m must be positive".into(),
            ));
        }
        let (cx, cy) = self.principal_point;
        let (w, h) = self.image_size;
        if w == 0 || h == 0 {
            return Err(Error::InvalidParams("image_size must be nonzero".into()));
        }
        if !(0.0..w as f64).contains(&cx) || !(0.0..h as f64).contains(&cy) {
            return Err(Error::InvalidParams(format!(
                "principal point ({cx}, {cy}) outside {w}x{h} image"
            )));
        }
        Ok(())
    }

    /// Metric depth along the optical axis for a given disparity.
    pub fn depth_from_disparity(&self, d: f64) -> Result<f64> {
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::InvalidDisparity(d));
        }
        Ok(self.focal_length_px * self.baseline_m / d)
    }

    /// Disparity observed for a surface at depth `z` (inverse of
    /// [`depth_from_disparity`](Self::depth_from_disparity)).
    pub fn disparity_from_depth(&self, z: f64) -> f64 {
        self.focal_length_px * self.baseline_m / z
    }

    /// Back-project pixel (u, v) with disparity `d` into the camera frame.
    pub fn reproject_pixel(&self, u: f64, v: f64, d: f64) -> Result<Point3> {
        let (w, h) = self.image_size;
        if !(0.0..w as f64).contains(&u) || !(0.0..h as f64).contains(&v) {
            return Err(Error::OutOfBounds { u, v, width: w, height: h });
        }
        self.reproject_unchecked(u, v, d)
    }

    /// Same as [`reproject_pixel`](Self::reproject_pixel) minus the image
    /// bound check, for callers that iterate a raster of known size.
    pub(crate) fn reproject_unchecked(&self, u: f64, v: f64, d: f64) -> Result<Point3> {
        let z = self.depth_from_disparity(d)?;
        let (cx, cy) = self.principal_point;
        let f = self.focal_length_px;
        Ok(Point3::new((u - cx) * z / f, (v - cy) * z / f, z))
    }

    /// Height of a point above the assumed ground plane.
    ///
    /// The plane is fixed relative to the camera at `camera_height_m` below
    /// it, perpendicular to gravity. With zero pitch this is simply
    /// `camera_height_m - p.y`.
    pub fn point_height(&self, p: Point3) -> f64 {
        let (sin_p, cos_p) = self.pitch_rad.sin_cos();
        // Ground-frame "down" expressed in camera coordinates.
        let down_component = p.y * cos_p + p.z * sin_p;
        self.camera_height_m - down_component
    }

    /// Stable hash of the rig parameters, stored in container headers so a
    /// dataset can be tied back to the calibration that produced it.
    pub fn config_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        for v in [
            self.focal_length_px,
            self.baseline_m,
            self.principal_point.0,
            self.principal_point.1,
            self.camera_height_m,
            self.pitch_rad,
        ] {
            h.write(&v.to_le_bytes());
        }
        h.write(&self.image_size.0.to_le_bytes());
        h.write(&self.image_size.1.to_le_bytes());
        h.finish()
    }

    /// Read a rig from a TOML key-value file (see `rig.toml` in the README).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let rig: CameraRig =
            toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        rig.validate()?;
        Ok(rig)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).expect("rig serializes");
        std::fs::write(path, text).map_err(|e| Error::io_at(path, e))?;
        Ok(())
    }
}

/// FNV-1a, 64-bit. Tiny and platform-stable, which is all the rig hash needs.
pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub(crate) fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rig() -> CameraRig {
        CameraRig::default()
    }

    #[test]
    fn depth_range_endpoints() {
        let rig = rig();
        assert!((rig.depth_from_disparity(1.0).unwrap() - 200.0).abs() < 1e-9);
        assert!((rig.depth_from_disparity(64.0).unwrap() - 3.125).abs() < 1e-9);
    }

    #[test]
    fn unit_depth_identity() {
        let rig = rig();
        let d = rig.focal_length_px * rig.baseline_m;
        assert!((rig.depth_from_disparity(d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_disparity_rejected() {
        let rig = rig();
        assert!(matches!(rig.depth_from_disparity(0.0), Err(Error::InvalidDisparity(_))));
        assert!(matches!(rig.depth_from_disparity(-3.0), Err(Error::InvalidDisparity(_))));
    }

    #[test]
    fn principal_ray_reprojects_to_axis() {
        let rig = rig();
        let (cx, cy) = rig.principal_point;
        let p = rig.reproject_pixel(cx, cy, 17.0).unwrap();
        assert_eq!(p.x, 0.0);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn unit_offset_identity() {
        // Needs an image wide enough to contain the pixel one focal length
        // right of the principal point.
        let rig = CameraRig {
            focal_length_px: 300.0,
            principal_point: (400.0, 300.0),
            image_size: (800, 600),
            ..CameraRig::default()
        };
        let (cx, cy) = rig.principal_point;
        let d = rig.focal_length_px * rig.baseline_m; // depth 1 m
        let p = rig.reproject_pixel(cx + rig.focal_length_px, cy, d).unwrap();
        assert!((p.x - 1.0).abs() < 1e-12);
        assert!((p.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reproject_rejects_out_of_bounds() {
        let rig = rig();
        assert!(matches!(
            rig.reproject_pixel(480.0, 10.0, 5.0),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn reproject_linear_in_pixel_offset() {
        let rig = rig();
        let (cx, cy) = rig.principal_point;
        let d = 8.0;
        let base = rig.reproject_pixel(cx + 10.0, cy + 4.0, d).unwrap();
        let double = rig.reproject_pixel(cx + 20.0, cy + 8.0, d).unwrap();
        assert!((double.x - 2.0 * base.x).abs() < 1e-12);
        assert!((double.y - 2.0 * base.y).abs() < 1e-12);
    }

    #[test]
    fn height_endpoints() {
        let rig = rig();
        let h = rig.camera_height_m;
        assert_eq!(rig.point_height(Point3::new(0.0, h, 10.0)), 0.0);
        assert_eq!(rig.point_height(Point3::new(0.0, 0.0, 10.0)), h);
    }

    #[test]
    fn pitch_reduces_to_plain_height_at_zero() {
        let mut rig = rig();
        let p = Point3::new(0.3, 0.8, 12.0);
        let flat = rig.point_height(p);
        rig.pitch_rad = 0.2;
        let pitched = rig.point_height(p);
        assert!((flat - (rig.camera_height_m - p.y)).abs() < 1e-12);
        assert!(pitched != flat);
    }

    #[test]
    fn disparity_depth_round_trip() {
        let rig = rig();
        for i in 0..=630 {
            let d = 1.0 + i as f64 * 0.1;
            let z = rig.depth_from_disparity(d).unwrap();
            let back = rig.disparity_from_depth(z);
            assert!((back - d).abs() / d < 1e-9, "d={d} back={back}");
        }
    }

    #[test]
    fn depth_strictly_decreases_with_disparity() {
        let rig = rig();
        let mut prev = f64::INFINITY;
        for d in 1..=64 {
            let z = rig.depth_from_disparity(d as f64).unwrap();
            assert!(z < prev);
            prev = z;
        }
    }

    #[test]
    fn toml_round_trip(){
        let dir = std::env::temp_dir().join("stereoseg-rig-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rig.toml");
        let rig = rig();
        rig.save(&path).unwrap();
        let loaded = CameraRig::load(&path).unwrap();
        assert_eq!(rig, loaded);
    }

    #[test]
    fn validate_rejects_bad_principal_point() {
        let mut rig = rig();
        rig.principal_point = (500.0, 180.0);
        assert!(rig.validate().is_err());
    }
}
