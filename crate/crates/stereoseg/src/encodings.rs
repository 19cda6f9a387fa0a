//! Depth-derived feature channels and multi-channel packing.
//!
//! A disparity map plus camera rig yields four derived quantities per pixel:
//! the disparity itself (D), height above the assumed ground plane (H),
//! surface normal orientation (N), and the angle between the normal and
//! gravity (A). Each is quantized to an 8-bit channel with fixed global
//! ranges and round-half-up, so outputs are bit-reproducible, and packed
//! together with RGB into planar multi-channel images.
//!
//! Invalid disparity pixels encode to 0 in every derived channel.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Point3};
use crate::raster::{round_half_up_u8, RgbImage};
use crate::stereo::DisparityMap;

/// Single 8-bit feature plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel8 {
    width: u32,
    height: u32,
    values: Vec<u8>,
}

impl Channel8 {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, values: vec![0; width as usize * height as usize] }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<u8>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "{}x{} channel needs {} values, got {}",
                width,
                height,
                width as usize * height as usize,
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> u8 {
        self.values[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: u8) {
        self.values[v as usize * self.width as usize + u as usize] = value;
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// Export as an 8-bit grayscale PNG (the usual way to eyeball a channel).
    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        let buf: image::ImageBuffer<image::Luma<u8>, Vec<u8>> =
            image::ImageBuffer::from_raw(self.width, self.height, self.values.clone())
                .expect("value count matches dimensions");
        buf.save(path)?;
        Ok(())
    }
}

/// Per-pixel unit surface normals with a validity mask.
///
/// Valid normals are unit length and oriented toward the camera (never away
/// from it): flat ground gives (0, -1, 0), a wall facing the camera gives
/// (0, 0, -1).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: u32,
    height: u32,
    normals: Vec<[f64; 3]>,
    valid: Vec<bool>,
}

impl NormalMap {
    pub fn new_invalid(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, normals: vec![[0.0; 3]; n], valid: vec![false; n] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> Option<[f64; 3]> {
        let i = v as usize * self.width as usize + u as usize;
        self.valid[i].then(|| self.normals[i])
    }

    pub fn set(&mut self, u: u32, v: u32, normal: [f64; 3]) {
        let i = v as usize * self.width as usize + u as usize;
        self.normals[i] = normal;
        self.valid[i] = true;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Channel layout of a packed image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncodingKind {
    Rgb,
    Rgbd,
    Rgbh,
    Rgba,
    Rgbn,
    Rgbdha,
}

impl EncodingKind {
    pub const ALL: [EncodingKind; 6] = [
        EncodingKind::Rgb,
        EncodingKind::Rgbd,
        EncodingKind::Rgbh,
        EncodingKind::Rgba,
        EncodingKind::Rgbn,
        EncodingKind::Rgbdha,
    ];

    pub fn channel_count(self) -> usize {
        match self {
            EncodingKind::Rgb => 3,
            EncodingKind::Rgbd | EncodingKind::Rgbh | EncodingKind::Rgba => 4,
            EncodingKind::Rgbn | EncodingKind::Rgbdha => 6,
        }
    }

    /// Which derived channels this layout appends after R, G, B.
    pub(crate) fn needs(self) -> (bool, bool, bool, bool) {
        // (d, h, a, n)
        match self {
            EncodingKind::Rgb => (false, false, false, false),
            EncodingKind::Rgbd => (true, false, false, false),
            EncodingKind::Rgbh => (false, true, false, false),
            EncodingKind::Rgba => (false, false, true, false),
            EncodingKind::Rgbn => (false, false, false, true),
            EncodingKind::Rgbdha => (true, true, true, false),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            EncodingKind::Rgb => 0,
            EncodingKind::Rgbd => 1,
            EncodingKind::Rgbh => 2,
            EncodingKind::Rgba => 3,
            EncodingKind::Rgbn => 4,
            EncodingKind::Rgbdha => 5,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        EncodingKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(EncodingKind::Rgb),
            "rgbd" => Ok(EncodingKind::Rgbd),
            "rgbh" => Ok(EncodingKind::Rgbh),
            "rgba" => Ok(EncodingKind::Rgba),
            "rgbn" => Ok(EncodingKind::Rgbn),
            "rgbdha" => Ok(EncodingKind::Rgbdha),
            other => Err(Error::InvalidParams(format!("unknown encoding kind '{other}'"))),
        }
    }
}

impl fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EncodingKind::Rgb => "RGB",
            EncodingKind::Rgbd => "RGBD",
            EncodingKind::Rgbh => "RGBH",
            EncodingKind::Rgba => "RGBA",
            EncodingKind::Rgbn => "RGBN",
            EncodingKind::Rgbdha => "RGBDHA",
        };
        f.write_str(s)
    }
}

/// Which matcher produced the disparity behind a depth-bearing encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StereoSource {
    Sgbm,
    Asw,
}

impl StereoSource {
    pub(crate) fn tag(self) -> u8 {
        match self {
            StereoSource::Sgbm => 1,
            StereoSource::Asw => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Option<Self>> {
        match tag {
            0 => Some(None),
            1 => Some(Some(StereoSource::Sgbm)),
            2 => Some(Some(StereoSource::Asw)),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgbm" => Ok(StereoSource::Sgbm),
            "asw" => Ok(StereoSource::Asw),
            other => Err(Error::InvalidParams(format!("unknown stereo source '{other}'"))),
        }
    }
}

impl fmt::Display for StereoSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StereoSource::Sgbm => "SGBM",
            StereoSource::Asw => "ASW",
        })
    }
}

/// A dataset variant: channel layout plus, for depth-bearing layouts, the
/// matcher that produced the disparity. The full family is the RGB baseline
/// plus five layouts times two matchers, eleven variants in all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncodingVariant {
    kind: EncodingKind,
    source: Option<StereoSource>,
}

impl EncodingVariant {
    pub fn new(kind: EncodingKind, source: Option<StereoSource>) -> Result<Self> {
        match (kind, source) {
            (EncodingKind::Rgb, Some(_)) => {
                Err(Error::InvalidParams("RGB has no stereo source".into()))
            }
            (EncodingKind::Rgb, None) => Ok(Self { kind, source }),
            (_, None) => Err(Error::InvalidParams(format!("{kind} requires a stereo source"))),
            (_, Some(_)) => Ok(Self { kind, source }),
        }
    }

    pub fn rgb() -> Self {
        Self { kind: EncodingKind::Rgb, source: None }
    }

    pub fn kind(&self) -> EncodingKind {
        self.kind
    }

    pub fn source(&self) -> Option<StereoSource> {
        self.source
    }

    /// Every variant, RGB first.
    pub fn all() -> Vec<EncodingVariant> {
        let mut out = vec![EncodingVariant::rgb()];
        for kind in [
            EncodingKind::Rgbd,
            EncodingKind::Rgbh,
            EncodingKind::Rgba,
            EncodingKind::Rgbn,
            EncodingKind::Rgbdha,
        ] {
            for source in [StereoSource::Sgbm, StereoSource::Asw] {
                out.push(EncodingVariant { kind, source: Some(source) });
            }
        }
        out
    }

    pub fn label(&self) -> String {
        match self.source {
            None => self.kind.to_string(),
            Some(s) => format!("{} ({})", self.kind, s),
        }
    }
}

impl fmt::Display for EncodingVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Planar n-channel 8-bit image, the classifier input artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    width: u32,
    height: u32,
    variant: EncodingVariant,
    planes: Vec<Channel8>,
}

impl MultiChannelImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn variant(&self) -> EncodingVariant {
        self.variant
    }

    pub fn channel_count(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, i: usize) -> &Channel8 {
        &self.planes[i]
    }

    pub fn planes(&self) -> &[Channel8] {
        &self.planes
    }

    pub(crate) fn from_planes(variant: EncodingVariant, planes: Vec<Channel8>) -> Result<Self> {
        if planes.len() != variant.kind().channel_count() {
            return Err(Error::Consistency(format!(
                "{} expects {} planes, got {}",
                variant.label(),
                variant.kind().channel_count(),
                planes.len()
            )));
        }
        let (w, h) = (planes[0].width(), planes[0].height());
        for p in &planes[1..] {
            if p.width() != w || p.height() != h {
                return Err(Error::dims((w, h), (p.width(), p.height()), "plane"));
            }
        }
        Ok(Self { width: w, height: h, variant, planes })
    }

    /// First three planes as a color image (every layout starts with R, G, B).
    pub fn to_rgb(&self) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                img.set(
                    u,
                    v,
                    [self.planes[0].get(u, v), self.planes[1].get(u, v), self.planes[2].get(u, v)],
                );
            }
        }
        img
    }
}

/// Split a color image into its R, G, B planes.
pub fn rgb_channels(img: &RgbImage) -> [Channel8; 3] {
    let (w, h) = (img.width(), img.height());
    let mk = |c: usize| {
        Channel8::from_values(w, h, img.plane(c).to_vec()).expect("plane size matches")
    };
    [mk(0), mk(1), mk(2)]
}

/// Linear map of valid disparities onto [0, 255] over the map's fixed search
/// range; invalid pixels become 0.
pub fn encode_disparity(dmap: &DisparityMap) -> Channel8 {
    let (d_min, d_max) = dmap.range();
    let span = (d_max - d_min) as f64;
    let mut out = Channel8::new(dmap.width(), dmap.height());
    for v in 0..dmap.height() {
        for u in 0..dmap.width() {
            if let Some(d) = dmap.get(u, v) {
                let t = if span > 0.0 { (d as f64 - d_min as f64) / span } else { 0.0 };
                out.set(u, v, round_half_up_u8(255.0 * t.clamp(0.0, 1.0)));
            }
        }
    }
    out
}

/// Height above the assumed ground plane, clamped to [0, 2h] and scaled to
/// [0, 255]; invalid pixels become 0.
pub fn encode_height(dmap: &DisparityMap, rig: &CameraRig) -> Channel8 {
    let two_h = 2.0 * rig.camera_height_m;
    let mut out = Channel8::new(dmap.width(), dmap.height());
    for v in 0..dmap.height() {
        for u in 0..dmap.width() {
            let Some(d) = dmap.get(u, v) else { continue };
            let Ok(p) = rig.reproject_unchecked(u as f64, v as f64, d as f64) else { continue };
            let height = rig.point_height(p).clamp(0.0, two_h);
            out.set(u, v, round_half_up_u8(255.0 * height / two_h));
        }
    }
    out
}

/// Per-pixel surface normals from the three-point neighborhood
/// {(u, v), (u+1, v), (u, v+1)}.
///
/// A pixel needs a valid disparity at itself and both forward neighbors;
/// anything else (including the last row and column) is invalid. Normals are
/// unit length and flipped, when necessary, to face the camera.
pub fn compute_normal_map(dmap: &DisparityMap, rig: &CameraRig) -> NormalMap {
    let mut out = NormalMap::new_invalid(dmap.width(), dmap.height());
    if dmap.width() < 2 || dmap.height() < 2 {
        return out;
    }
    for v in 0..dmap.height() - 1 {
        for u in 0..dmap.width() - 1 {
            let (Some(d0), Some(dr), Some(dd)) =
                (dmap.get(u, v), dmap.get(u + 1, v), dmap.get(u, v + 1))
            else {
                continue;
            };
            let (Ok(p), Ok(pr), Ok(pd)) = (
                rig.reproject_unchecked(u as f64, v as f64, d0 as f64),
                rig.reproject_unchecked(u as f64 + 1.0, v as f64, dr as f64),
                rig.reproject_unchecked(u as f64, v as f64 + 1.0, dd as f64),
            ) else {
                continue;
            };
            let e1 = [pr.x - p.x, pr.y - p.y, pr.z - p.z];
            let e2 = [pd.x - p.x, pd.y - p.y, pd.z - p.z];
            let mut n = cross(e1, e2);
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if len < 1e-15 {
                continue;
            }
            for c in &mut n {
                *c /= len;
            }
            if needs_flip(n, p) {
                for c in &mut n {
                    *c = -*c;
                }
            }
            out.set(u, v, n);
        }
    }
    out
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Orient toward the camera: a visible surface's normal must oppose the
/// viewing ray. The view-ray test (rather than the sign of z alone) matters
/// for surfaces seen edge-on in z, like the ground plane whose normal has
/// z = 0 exactly.
fn needs_flip(n: [f64; 3], p: Point3) -> bool {
    let dot = n[0] * p.x + n[1] * p.y + n[2] * p.z;
    if dot != 0.0 {
        return dot > 0.0;
    }
    if n[2] != 0.0 {
        return n[2] > 0.0;
    }
    n[1] > 0.0
}

/// Affine byte map for signed components: each of X, Y, Z goes through
/// `round(255 * (n + 1) / 2)`. A plain scale by 255 cannot represent negative
/// components in 8 bits. Invalid pixels become (0, 0, 0).
pub fn encode_normals(nmap: &NormalMap) -> [Channel8; 3] {
    let mut out = [
        Channel8::new(nmap.width(), nmap.height()),
        Channel8::new(nmap.width(), nmap.height()),
        Channel8::new(nmap.width(), nmap.height()),
    ];
    for v in 0..nmap.height() {
        for u in 0..nmap.width() {
            if let Some(n) = nmap.get(u, v) {
                for c in 0..3 {
                    out[c].set(u, v, round_half_up_u8(255.0 * (n[c] + 1.0) / 2.0));
                }
            }
        }
    }
    out
}

/// Dot product of each normal with the fixed gravity direction (0, -1, 0),
/// clamped to [0, 1] and scaled to [0, 255]: 255 for flat ground, 0 for
/// vertical or downward-facing surfaces. Invalid pixels become 0.
pub fn encode_angle_with_gravity(nmap: &NormalMap) -> Channel8 {
    let mut out = Channel8::new(nmap.width(), nmap.height());
    for v in 0..nmap.height() {
        for u in 0..nmap.width() {
            if let Some(n) = nmap.get(u, v) {
                let a = (-n[1]).clamp(0.0, 1.0);
                out.set(u, v, round_half_up_u8(255.0 * a));
            }
        }
    }
    out
}

/// Assemble a planar multi-channel image in fixed order: R, G, B followed by
/// the layout's derived channels (D | H | A | Nx,Ny,Nz | D,H,A).
///
/// Exactly the channels the layout requires must be supplied; anything
/// missing or extra is an arity error.
pub fn pack(
    rgb: &[Channel8; 3],
    variant: EncodingVariant,
    d: Option<&Channel8>,
    h: Option<&Channel8>,
    a: Option<&Channel8>,
    n: Option<&[Channel8; 3]>,
) -> Result<MultiChannelImage> {
    let (need_d, need_h, need_a, need_n) = variant.kind().needs();
    let provided = |have: bool| if have { "yes" } else { "no" };
    if need_d != d.is_some()
        || need_h != h.is_some()
        || need_a != a.is_some()
        || need_n != n.is_some()
    {
        let fmt_needs = |nd: bool, nh: bool, na: bool, nn: bool| {
            let mut parts = Vec::new();
            if nd {
                parts.push("D");
            }
            if nh {
                parts.push("H");
            }
            if na {
                parts.push("A");
            }
            if nn {
                parts.push("N");
            }
            parts.join(",")
        };
        return Err(Error::EncodingArity {
            kind: variant.label(),
            expected: fmt_needs(need_d, need_h, need_a, need_n),
            actual: format!(
                "D:{} H:{} A:{} N:{}",
                provided(d.is_some()),
                provided(h.is_some()),
                provided(a.is_some()),
                provided(n.is_some())
            ),
        });
    }

    let mut planes: Vec<Channel8> = rgb.to_vec();
    match variant.kind() {
        EncodingKind::Rgb => {}
        EncodingKind::Rgbd => planes.push(d.unwrap().clone()),
        EncodingKind::Rgbh => planes.push(h.unwrap().clone()),
        EncodingKind::Rgba => planes.push(a.unwrap().clone()),
        EncodingKind::Rgbn => planes.extend(n.unwrap().iter().cloned()),
        EncodingKind::Rgbdha => {
            planes.push(d.unwrap().clone());
            planes.push(h.unwrap().clone());
            planes.push(a.unwrap().clone());
        }
    }
    MultiChannelImage::from_planes(variant, planes)
}

/// Compute whatever derived channels a variant needs and pack it in one step.
/// Depth-bearing variants require the disparity map; RGB ignores it.
pub fn encode_variant(
    rgb: &RgbImage,
    dmap: Option<&DisparityMap>,
    rig: &CameraRig,
    variant: EncodingVariant,
) -> Result<MultiChannelImage> {
    let channels = rgb_channels(rgb);
    let (need_d, need_h, need_a, need_n) = variant.kind().needs();
    if !(need_d || need_h || need_a || need_n) {
        return pack(&channels, variant, None, None, None, None);
    }
    let dmap = dmap.ok_or_else(|| {
        Error::InvalidParams(format!("{} needs a disparity map", variant.label()))
    })?;
    if dmap.width() != rgb.width() || dmap.height() != rgb.height() {
        return Err(Error::dims(
            (rgb.width(), rgb.height()),
            (dmap.width(), dmap.height()),
            "disparity vs color",
        ));
    }
    let d = need_d.then(|| encode_disparity(dmap));
    let h = need_h.then(|| encode_height(dmap, rig));
    let (a, n) = if need_a || need_n {
        let nmap = compute_normal_map(dmap, rig);
        let a = need_a.then(|| encode_angle_with_gravity(&nmap));
        let n = need_n.then(|| encode_normals(&nmap));
        (a, n)
    } else {
        (None, None)
    };
    pack(&channels, variant, d.as_ref(), h.as_ref(), a.as_ref(), n.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_map(w: u32, h: u32) -> DisparityMap {
        DisparityMap::new_invalid(w, h, 1.0, 64.0)
    }

    #[test]
    fn disparity_byte_endpoints_and_midpoint() {
        let mut dmap = default_map(4, 1);
        dmap.set(0, 0, 64.0).unwrap();
        dmap.set(1, 0, 1.0).unwrap();
        dmap.set(2, 0, 32.5).unwrap();
        let ch = encode_disparity(&dmap);
        assert_eq!(ch.get(0, 0), 255);
        assert_eq!(ch.get(1, 0), 0);
        // 255 * 31.5 / 63 = 127.5, round-half-up
        assert_eq!(ch.get(2, 0), 128);
        // invalid pixel
        assert_eq!(ch.get(3, 0), 0);
    }

    #[test]
    fn disparity_encoding_is_monotone() {
        let mut dmap = default_map(64, 1);
        for u in 0..64 {
            dmap.set(u, 0, 1.0 + u as f32).unwrap();
        }
        let ch = encode_disparity(&dmap);
        for u in 1..64 {
            assert!(ch.get(u, 0) >= ch.get(u - 1, 0));
        }
    }

    #[test]
    fn height_byte_cases() {
        let rig = CameraRig::default(); // f=500, B=0.4, pp=(240,180), h=1.5
        let mut dmap = default_map(480, 360);
        // d=40 -> z=5m; y = (v - cy) * z / f
        dmap.set(10, 330, 40.0).unwrap(); // y = 1.5 = h  -> height 0
        dmap.set(10, 180, 40.0).unwrap(); // y = 0       -> height h
        dmap.set(10, 30, 40.0).unwrap(); // y = -1.5    -> height 2h (clamp edge)
        dmap.set(10, 0, 40.0).unwrap(); // y = -1.8    -> above 2h, clamped
        let ch = encode_height(&dmap, &rig);
        assert_eq!(ch.get(10, 330), 0);
        assert_eq!(ch.get(10, 180), 128); // round(127.5)
        assert_eq!(ch.get(10, 30), 255);
        assert_eq!(ch.get(10, 0), 255);
        assert_eq!(ch.get(11, 180), 0); // invalid
    }

    #[test]
    fn height_encoding_monotone_in_height() {
        // Fixed column, decreasing v means higher points (smaller y).
        let rig = CameraRig::default();
        let mut dmap = default_map(480, 360);
        for v in 0..360 {
            dmap.set(5, v, 20.0).unwrap();
        }
        let ch = encode_height(&dmap, &rig);
        for v in 1..360 {
            assert!(ch.get(5, v) <= ch.get(5, v - 1), "v={v}");
        }
    }

    #[test]
    fn constant_disparity_gives_fronto_normal() {
        let rig = CameraRig::default();
        let mut dmap = default_map(8, 8);
        for v in 0..8 {
            for u in 0..8 {
                dmap.set(u, v, 16.0).unwrap();
            }
        }
        let nmap = compute_normal_map(&dmap, &rig);
        for v in 0..7 {
            for u in 0..7 {
                let n = nmap.get(u, v).unwrap();
                assert!((n[0]).abs() < 1e-6 && (n[1]).abs() < 1e-6, "({u},{v}): {n:?}");
                assert!((n[2] + 1.0).abs() < 1e-6, "({u},{v}): {n:?}");
            }
        }
        // last row and column have no forward neighbors
        assert!(nmap.get(7, 3).is_none());
        assert!(nmap.get(3, 7).is_none());
    }

    #[test]
    fn analytic_ground_plane_gives_up_normal() {
        let rig = CameraRig::default();
        let (f, b, h) = (rig.focal_length_px, rig.baseline_m, rig.camera_height_m);
        let cy = rig.principal_point.1;
        let mut dmap = default_map(480, 360);
        for v in 200..360 {
            let d = f * b * (v as f64 - cy) / (f * h); // disparity of ground at row v
            for u in 0..480 {
                dmap.set(u, v, d as f32).unwrap();
            }
        }
        let nmap = compute_normal_map(&dmap, &rig);
        let mut checked = 0;
        for v in 200..359 {
            for u in 0..479 {
                let n = nmap.get(u, v).unwrap();
                assert!(n[0].abs() < 1e-3 && (n[1] + 1.0).abs() < 1e-3 && n[2].abs() < 1e-3);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn isolated_pixel_has_no_normal() {
        let rig = CameraRig::default();
        let mut dmap = default_map(8, 8);
        dmap.set(3, 3, 10.0).unwrap();
        let nmap = compute_normal_map(&dmap, &rig);
        assert_eq!(nmap.valid_count(), 0);
    }

    #[test]
    fn normal_bytes_affine_map() {
        let mut nmap = NormalMap::new_invalid(3, 1);
        nmap.set(0, 0, [0.0, 0.0, -1.0]);
        nmap.set(1, 0, [0.0, -1.0, 0.0]);
        let [nx, ny, nz] = encode_normals(&nmap);
        assert_eq!((nx.get(0, 0), ny.get(0, 0), nz.get(0, 0)), (128, 128, 0));
        assert_eq!((nx.get(1, 0), ny.get(1, 0), nz.get(1, 0)), (128, 0, 128));
        assert_eq!((nx.get(2, 0), ny.get(2, 0), nz.get(2, 0)), (0, 0, 0)); // invalid
    }

    #[test]
    fn gravity_angle_bytes() {
        let mut nmap = NormalMap::new_invalid(4, 1);
        nmap.set(0, 0, [0.0, -1.0, 0.0]); // flat ground
        nmap.set(1, 0, [0.0, 0.0, -1.0]); // vertical surface
        nmap.set(2, 0, [0.0, 1.0, 0.0]); // downward-facing, clamps to 0
        let ch = encode_angle_with_gravity(&nmap);
        assert_eq!(ch.get(0, 0), 255);
        assert_eq!(ch.get(1, 0), 0);
        assert_eq!(ch.get(2, 0), 0);
        assert_eq!(ch.get(3, 0), 0); // invalid
    }

    fn flat(vals: u8) -> Channel8 {
        Channel8::from_values(2, 2, vec![vals; 4]).unwrap()
    }

    #[test]
    fn pack_orders_planes_and_round_trips() {
        let rgb = [flat(10), flat(20), flat(30)];
        let d = flat(40);
        let h = flat(50);
        let a = flat(60);
        let n = [flat(70), flat(80), flat(90)];

        let rgb_img = pack(&rgb, EncodingVariant::rgb(), None, None, None, None).unwrap();
        assert_eq!(rgb_img.channel_count(), 3);
        assert_eq!(rgb_img.plane(2).get(0, 0), 30);

        let v6 = EncodingVariant::new(EncodingKind::Rgbdha, Some(StereoSource::Sgbm)).unwrap();
        let dha = pack(&rgb, v6, Some(&d), Some(&h), Some(&a), None).unwrap();
        assert_eq!(dha.channel_count(), 6);
        let got: Vec<u8> = (0..6).map(|i| dha.plane(i).get(1, 1)).collect();
        assert_eq!(got, vec![10, 20, 30, 40, 50, 60]);

        let vn = EncodingVariant::new(EncodingKind::Rgbn, Some(StereoSource::Asw)).unwrap();
        let rgbn = pack(&rgb, vn, None, None, None, Some(&n)).unwrap();
        let got: Vec<u8> = (0..6).map(|i| rgbn.plane(i).get(0, 1)).collect();
        assert_eq!(got, vec![10, 20, 30, 70, 80, 90]);

        // Unpacking is plane slicing; verify bit-exact recovery.
        assert_eq!(rgbn.plane(3), &n[0]);
        assert_eq!(rgbn.plane(4), &n[1]);
        assert_eq!(rgbn.plane(5), &n[2]);
    }

    #[test]
    fn pack_rejects_wrong_arity() {
        let rgb = [flat(1), flat(2), flat(3)];
        let d = flat(4);
        let v = EncodingVariant::new(EncodingKind::Rgbd, Some(StereoSource::Sgbm)).unwrap();
        // missing D
        assert!(matches!(
            pack(&rgb, v, None, None, None, None),
            Err(Error::EncodingArity { .. })
        ));
        // extra H
        assert!(matches!(
            pack(&rgb, v, Some(&d), Some(&d), None, None),
            Err(Error::EncodingArity { .. })
        ));
    }

    #[test]
    fn pack_rejects_dimension_mismatch() {
        let rgb = [flat(1), flat(2), flat(3)];
        let d = Channel8::from_values(3, 2, vec![0; 6]).unwrap();
        let v = EncodingVariant::new(EncodingKind::Rgbd, Some(StereoSource::Asw)).unwrap();
        assert!(matches!(
            pack(&rgb, v, Some(&d), None, None, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn variant_family_is_eleven() {
        let all = EncodingVariant::all();
        assert_eq!(all.len(), 11);
        assert_eq!(all[0], EncodingVariant::rgb());
        let counts: Vec<usize> = all.iter().map(|v| v.kind().channel_count()).collect();
        assert_eq!(counts.iter().filter(|&&c| c == 3).count(), 1);
        assert_eq!(counts.iter().filter(|&&c| c == 4).count(), 6);
        assert_eq!(counts.iter().filter(|&&c| c == 6).count(), 4);
    }

    #[test]
    fn variant_validation() {
        assert!(EncodingVariant::new(EncodingKind::Rgb, Some(StereoSource::Sgbm)).is_err());
        assert!(EncodingVariant::new(EncodingKind::Rgbh, None).is_err());
    }

    #[test]
    fn invalid_pixels_do_not_leak_into_neighbors() {
        // One invalid pixel: its own encoded value is 0 and every other
        // pixel's D value is unaffected compared to an all-valid map.
        let mut full = default_map(6, 6);
        for v in 0..6 {
            for u in 0..6 {
                full.set(u, v, 30.0).unwrap();
            }
        }
        let mut holed = full.clone();
        holed.invalidate(3, 3);
        let a = encode_disparity(&full);
        let b = encode_disparity(&holed);
        for v in 0..6 {
            for u in 0..6 {
                if (u, v) == (3, 3) {
                    assert_eq!(b.get(u, v), 0);
                } else {
                    assert_eq!(a.get(u, v), b.get(u, v));
                }
            }
        }
    }
}
