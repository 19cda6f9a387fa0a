//! Synthetic rectified stereo pairs with analytic ground truth.
//!
//! Scenes are lists of textured planar primitives rendered by per-pixel ray
//! casting from both camera positions. Textures are functions of the surface
//! point, not the view, so corresponding pixels in the two images see
//! identical values; ground-truth disparity, normals, heights and class
//! labels all come from the same closed-form intersections. This is the
//! oracle the matchers, encoders and classifier are scored against.

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, LabelMap};
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Point3};
use crate::raster::{round_half_up_u8, RgbImage};
use crate::stereo::{DisparityMap, DEFAULT_D_MAX, DEFAULT_D_MIN};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Procedural surface texture. Values modulate the primitive's base color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TextureSpec {
    /// Base color everywhere.
    Flat,
    /// Per-cell hashed brightness in [lo, hi]; cells are `cell_m` wide in
    /// surface coordinates.
    Noise { cell_m: f64, lo: u8, hi: u8 },
    /// Alternating brightness cells.
    Checker { cell_m: f64, dark: u8, light: u8 },
}

/// Planar scene geometry, all coordinates in the left-camera frame
/// (x right, y down, z forward, meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Plane z = depth_m bounded by world x/y ranges.
    FrontoPlane { depth_m: f64, x_range: (f64, f64), y_range: (f64, f64) },
    /// Piece of the assumed ground plane (y = camera height), bounded in
    /// x and z.
    GroundPlane { x_range: (f64, f64), z_range: (f64, f64) },
    /// Arbitrary plane through `point` with the given normal, clipped to a
    /// z interval and optionally an x interval.
    SlantedPlane {
        point: [f64; 3],
        normal: [f64; 3],
        z_range: (f64, f64),
        #[serde(default)]
        x_range: Option<(f64, f64)>,
    },
    /// Axis-aligned box.
    BoxShape { center: [f64; 3], size: [f64; 3] },
}

/// A textured, class-tagged primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePrimitive {
    pub shape: Shape,
    pub class: ClassLabel,
    pub base_color: [u8; 3],
    pub texture: TextureSpec,
}

/// Full scene description. Serializes as TOML for the render CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// Additive Gaussian intensity noise (standard deviation, intensity
    /// levels). Applied per pixel, identically to R, G and B, independently
    /// per view. Zero means noise-free.
    #[serde(default)]
    pub noise_sigma: f64,
    pub background_class: ClassLabel,
    pub background_color: [u8; 3],
    pub primitives: Vec<ScenePrimitive>,
}

impl SceneSpec {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = toml::to_string(self).expect("scene serializes");
        std::fs::write(path, text).map_err(|e| Error::io_at(path, e))?;
        Ok(())
    }
}

/// Analytic per-pixel ground truth for the left view.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    disparity: DisparityMap,
    heights: Vec<f64>,
    normals: Vec<[f64; 3]>,
    labels: LabelMap,
    occluded: Vec<bool>,
}

impl GroundTruth {
    pub fn width(&self) -> u32 {
        self.disparity.width()
    }

    pub fn height(&self) -> u32 {
        self.disparity.height()
    }

    pub fn disparity(&self) -> &DisparityMap {
        &self.disparity
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width() as usize + u as usize
    }

    /// Height above the ground plane, for pixels with a surface.
    pub fn height_at(&self, u: u32, v: u32) -> Option<f64> {
        self.disparity.is_valid(u, v).then(|| self.heights[self.index(u, v)])
    }

    /// Camera-facing unit surface normal, for pixels with a surface.
    pub fn normal_at(&self, u: u32, v: u32) -> Option<[f64; 3]> {
        self.disparity.is_valid(u, v).then(|| self.normals[self.index(u, v)])
    }

    /// True when the surface seen here is hidden (or out of frame) in the
    /// right view, so no matcher can legitimately recover its disparity.
    pub fn is_occluded(&self, u: u32, v: u32) -> bool {
        self.occluded[self.index(u, v)]
    }

    pub fn occluded_count(&self) -> usize {
        self.occluded.iter().filter(|&&o| o).count()
    }
}

/// Rendered pair plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub left: RgbImage,
    pub right: RgbImage,
    pub gt: GroundTruth,
}

struct Hit {
    prim: usize,
    point: Point3,
    z: f64,
}

/// Render both views and the ground truth.
///
/// Every primitive must lie inside the representable disparity interval
/// [1, 64] for the given rig; surfaces beyond it would alias into the
/// matcher search range and poison the oracle.
pub fn render_scene(spec: &SceneSpec, rig: &CameraRig) -> Result<RenderedScene> {
    rig.validate()?;
    validate_primitive_ranges(spec, rig)?;

    let (w, h) = rig.image_size;
    let baseline = rig.baseline_m;

    let mut left = RgbImage::new(w, h);
    let mut right = RgbImage::new(w, h);
    let mut disparity =
        DisparityMap::new_invalid(w, h, DEFAULT_D_MIN as f32, DEFAULT_D_MAX as f32);
    let mut heights = vec![0.0f64; w as usize * h as usize];
    let mut normals = vec![[0.0f64; 3]; w as usize * h as usize];
    let mut labels = LabelMap::filled(w, h, spec.background_class);
    let mut occluded = vec![false; w as usize * h as usize];

    // Left view with ground truth.
    for v in 0..h {
        for u in 0..w {
            let i = v as usize * w as usize + u as usize;
            match cast_ray(spec, rig, 0.0, u as f64, v as f64) {
                Some(hit) => {
                    left.set(u, v, shade(spec, &hit));
                    // Range validation ran up front; the clamp only absorbs
                    // last-ulp rounding at the interval endpoints.
                    let d = rig
                        .disparity_from_depth(hit.z)
                        .clamp(DEFAULT_D_MIN as f64, DEFAULT_D_MAX as f64);
                    disparity.set(u, v, d as f32)?;
                    heights[i] = rig.point_height(hit.point);
                    normals[i] = primitive_normal(&spec.primitives[hit.prim].shape, &hit);
                    labels.set(u, v, spec.primitives[hit.prim].class);

                    // Occlusion: probe the right view at the analytic
                    // correspondence. A nearer surface there hides this one.
                    let xr = u as f64 - d;
                    if !(0.0..=(w as f64 - 1.0)).contains(&xr) {
                        occluded[i] = true;
                    } else {
                        match cast_ray(spec, rig, baseline, xr, v as f64) {
                            Some(rhit) if rhit.z < hit.z * (1.0 - 1e-9) - 1e-9 => {
                                occluded[i] = true
                            }
                            Some(_) => {}
                            None => occluded[i] = true,
                        }
                    }
                }
                None => {
                    left.set(u, v, spec.background_color);
                    occluded[i] = true; // nothing to match
                }
            }
        }
    }

    // Right view, image only.
    for v in 0..h {
        for u in 0..w {
            let color = match cast_ray(spec, rig, baseline, u as f64, v as f64) {
                Some(hit) => shade(spec, &hit),
                None => spec.background_color,
            };
            right.set(u, v, color);
        }
    }

    if spec.noise_sigma > 0.0 {
        add_intensity_noise(&mut left, spec.noise_sigma, spec.seed, 0);
        add_intensity_noise(&mut right, spec.noise_sigma, spec.seed, 1);
    }

    Ok(RenderedScene {
        left,
        right,
        gt: GroundTruth { disparity, heights, normals, labels, occluded },
    })
}

fn validate_primitive_ranges(spec: &SceneSpec, rig: &CameraRig) -> Result<()> {
    for (index, prim) in spec.primitives.iter().enumerate() {
        let (z_min, z_max) = z_extent(&prim.shape, rig)?;
        if z_min <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "primitive {index} reaches non-positive depth {z_min}"
            )));
        }
        let d_hi = rig.disparity_from_depth(z_min);
        let d_lo = rig.disparity_from_depth(z_max);
        if d_hi > DEFAULT_D_MAX as f64 + 1e-9 || d_lo < DEFAULT_D_MIN as f64 - 1e-9 {
            return Err(Error::PrimitiveOutOfRange {
                index,
                d_lo,
                d_hi,
                limit_lo: DEFAULT_D_MIN as f64,
                limit_hi: DEFAULT_D_MAX as f64,
            });
        }
    }
    Ok(())
}

fn z_extent(shape: &Shape, _rig: &CameraRig) -> Result<(f64, f64)> {
    Ok(match shape {
        Shape::FrontoPlane { depth_m, .. } => (*depth_m, *depth_m),
        Shape::GroundPlane { z_range, .. } => *z_range,
        Shape::SlantedPlane { z_range, .. } => *z_range,
        Shape::BoxShape { center, size } => {
            (center[2] - size[2] / 2.0, center[2] + size[2] / 2.0)
        }
    })
}

/// Nearest primitive hit by the ray through pixel (px, py) of a camera whose
/// center sits at x = `cam_x`. Ties by depth go to the earlier primitive.
fn cast_ray(spec: &SceneSpec, rig: &CameraRig, cam_x: f64, px: f64, py: f64) -> Option<Hit> {
    let f = rig.focal_length_px;
    let (cx, cy) = rig.principal_point;
    let dir = [(px - cx) / f, (py - cy) / f, 1.0];
    let origin = [cam_x, 0.0, 0.0];

    let mut best: Option<Hit> = None;
    for (prim, p) in spec.primitives.iter().enumerate() {
        let Some(t) = intersect(&p.shape, rig, origin, dir) else { continue };
        // dir.z == 1, so the ray parameter is the camera-frame depth.
        if best.as_ref().is_none_or(|b| t < b.z - 1e-12) {
            let point = Point3::new(
                origin[0] + t * dir[0],
                origin[1] + t * dir[1],
                origin[2] + t * dir[2],
            );
            best = Some(Hit { prim, point, z: t });
        }
    }
    best
}

fn intersect(shape: &Shape, rig: &CameraRig, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
    match shape {
        Shape::FrontoPlane { depth_m, x_range, y_range } => {
            let t = depth_m - origin[2];
            if t <= 0.0 {
                return None;
            }
            let x = origin[0] + t * dir[0];
            let y = origin[1] + t * dir[1];
            (contains(*x_range, x) && contains(*y_range, y)).then_some(t)
        }
        Shape::GroundPlane { x_range, z_range } => {
            if dir[1] <= 1e-12 {
                return None; // looking at or above the horizon
            }
            let t = (rig.camera_height_m - origin[1]) / dir[1];
            if t <= 0.0 {
                return None;
            }
            let x = origin[0] + t * dir[0];
            let z = origin[2] + t * dir[2];
            (contains(*x_range, x) && contains(*z_range, z)).then_some(t)
        }
        Shape::SlantedPlane { point, normal, z_range, x_range } => {
            let denom = dot(*normal, dir);
            if denom.abs() < 1e-12 {
                return None;
            }
            let to_plane =
                [point[0] - origin[0], point[1] - origin[1], point[2] - origin[2]];
            let t = dot(*normal, to_plane) / denom;
            if t <= 0.0 {
                return None;
            }
            let x = origin[0] + t * dir[0];
            let z = origin[2] + t * dir[2];
            if !contains(*z_range, z) {
                return None;
            }
            match x_range {
                Some(r) if !contains(*r, x) => None,
                _ => Some(t),
            }
        }
        Shape::BoxShape { center, size } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            for axis in 0..3 {
                let lo = center[axis] - size[axis] / 2.0;
                let hi = center[axis] + size[axis] / 2.0;
                if dir[axis].abs() < 1e-12 {
                    if origin[axis] < lo || origin[axis] > hi {
                        return None;
                    }
                    continue;
                }
                let mut t0 = (lo - origin[axis]) / dir[axis];
                let mut t1 = (hi - origin[axis]) / dir[axis];
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                t_near = t_near.max(t0);
                t_far = t_far.min(t1);
                if t_near > t_far {
                    return None;
                }
            }
            (t_near > 0.0).then_some(t_near)
        }
    }
}

fn contains(range: (f64, f64), x: f64) -> bool {
    x >= range.0 && x <= range.1
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Camera-facing unit normal of the surface at a hit.
fn primitive_normal(shape: &Shape, hit: &Hit) -> [f64; 3] {
    match shape {
        Shape::FrontoPlane { .. } => [0.0, 0.0, -1.0],
        Shape::GroundPlane { .. } => [0.0, -1.0, 0.0],
        Shape::SlantedPlane { normal, .. } => {
            let len = dot(*normal, *normal).sqrt();
            let mut n = [normal[0] / len, normal[1] / len, normal[2] / len];
            let view = [hit.point.x, hit.point.y, hit.point.z];
            if dot(n, view) > 0.0 {
                for c in &mut n {
                    *c = -*c;
                }
            }
            n
        }
        Shape::BoxShape { center, size } => {
            // Entry face: the axis where the hit sits on a slab boundary.
            let p = [hit.point.x, hit.point.y, hit.point.z];
            let mut best_axis = 0;
            let mut best_gap = f64::INFINITY;
            let mut sign = -1.0;
            for axis in 0..3 {
                let rel = p[axis] - center[axis];
                let gap = (rel.abs() - size[axis] / 2.0).abs();
                if gap < best_gap {
                    best_gap = gap;
                    best_axis = axis;
                    sign = rel.signum();
                }
            }
            let mut n = [0.0; 3];
            n[best_axis] = sign;
            n
        }
    }
}

/// View-independent shading: texture value modulates the base color.
fn shade(spec: &SceneSpec, hit: &Hit) -> [u8; 3] {
    let prim = &spec.primitives[hit.prim];
    let (a, b) = surface_params(&prim.shape, hit);
    // Irrational lattice phase: keeps cell boundaries off the exact pixel
    // sample positions, where the two views' last-ulp rounding could
    // otherwise land in different cells.
    let cell = |x: f64, cell_m: f64, phase: f64| (x / cell_m - phase).floor() as i64;
    let value = match &prim.texture {
        TextureSpec::Flat => 255u8,
        TextureSpec::Noise { cell_m, lo, hi } => {
            let i = cell(a, *cell_m, 0.357_119_034_892);
            let j = cell(b, *cell_m, 0.710_935_621_778);
            let span = (*hi as u64).saturating_sub(*lo as u64) + 1;
            (*lo as u64 + hash_cell(spec.seed, hit.prim as u64, i, j) % span) as u8
        }
        TextureSpec::Checker { cell_m, dark, light } => {
            let i = cell(a, *cell_m, 0.357_119_034_892);
            let j = cell(b, *cell_m, 0.710_935_621_778);
            if (i + j).rem_euclid(2) == 0 {
                *dark
            } else {
                *light
            }
        }
    };
    let scale = value as f64 / 255.0;
    [
        round_half_up_u8(prim.base_color[0] as f64 * scale),
        round_half_up_u8(prim.base_color[1] as f64 * scale),
        round_half_up_u8(prim.base_color[2] as f64 * scale),
    ]
}

/// 2D texture coordinates on the surface, independent of the viewing camera.
fn surface_params(shape: &Shape, hit: &Hit) -> (f64, f64) {
    let p = &hit.point;
    match shape {
        Shape::FrontoPlane { .. } => (p.x, p.y),
        Shape::GroundPlane { .. } => (p.x, p.z),
        Shape::SlantedPlane { point, normal, .. } => {
            let len = dot(*normal, *normal).sqrt();
            let n = [normal[0] / len, normal[1] / len, normal[2] / len];
            let up = if n[1].abs() < 0.9 { [0.0, 1.0, 0.0] } else { [1.0, 0.0, 0.0] };
            let e1 = normalize(cross3(up, n));
            let e2 = cross3(n, e1);
            let rel = [p.x - point[0], p.y - point[1], p.z - point[2]];
            (dot(rel, e1), dot(rel, e2))
        }
        Shape::BoxShape { center, size } => {
            // Parameterize by the two non-normal axes of the entry face.
            let p3 = [p.x, p.y, p.z];
            let mut axis = 0;
            let mut best_gap = f64::INFINITY;
            for a in 0..3 {
                let gap = ((p3[a] - center[a]).abs() - size[a] / 2.0).abs();
                if gap < best_gap {
                    best_gap = gap;
                    axis = a;
                }
            }
            match axis {
                0 => (p.y, p.z),
                1 => (p.x, p.z),
                _ => (p.x, p.y),
            }
        }
    }
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let len = dot(v, v).sqrt();
    [v[0] / len, v[1] / len, v[2] / len]
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_cell(seed: u64, prim: u64, i: i64, j: i64) -> u64 {
    let mut x = splitmix(seed ^ prim.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    x = splitmix(x ^ (i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    splitmix(x ^ (j as u64).wrapping_mul(0x94D0_49BB_1331_11EB))
}

/// Seeded Box-Muller intensity noise, one scalar per pixel shared by the
/// three channels so the luminance sees exactly the requested sigma.
fn add_intensity_noise(img: &mut RgbImage, sigma: f64, seed: u64, view_tag: u64) {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ (view_tag << 32)));
    let mut uniform = move || ((rng.next_u64() >> 11) as f64 + 0.5) / 9_007_199_254_740_992.0;
    let mut spare: Option<f64> = None;
    let mut gaussian = move || {
        if let Some(s) = spare.take() {
            return s;
        }
        let (u1, u2) = (uniform(), uniform());
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        spare = Some(r * theta.sin());
        r * theta.cos()
    };
    for v in 0..img.height() {
        for u in 0..img.width() {
            let n = sigma * gaussian();
            let px = img.get(u, v);
            let bump =
                |c: u8| -> u8 { round_half_up_u8((c as f64 + n).clamp(0.0, 255.0)) };
            img.set(u, v, [bump(px[0]), bump(px[1]), bump(px[2])]);
        }
    }
}

/// Compact rig for desk-scale end-to-end runs: 64x64 images, short baseline,
/// disparities in the low teens.
pub fn desk_rig() -> CameraRig {
    CameraRig {
        focal_length_px: 80.0,
        baseline_m: 0.3,
        principal_point: (32.0, 32.0),
        camera_height_m: 1.5,
        image_size: (64, 64),
        pitch_rad: 0.0,
    }
}

/// Scene-typical base colors per class; annotation palettes are separate.
fn class_color(class: ClassLabel) -> [u8; 3] {
    match class {
        ClassLabel::Sky => [150, 200, 240],
        ClassLabel::Water => [40, 90, 210],
        ClassLabel::Dirt => [165, 125, 70],
        ClassLabel::Grass => [95, 185, 70],
        ClassLabel::Bush => [35, 120, 45],
        ClassLabel::Tree => [95, 75, 35],
        ClassLabel::Ignore => [0, 0, 0],
    }
}

/// Full-frame textured wall at the depth matching the given disparity. The
/// workhorse matcher fixture: every surface pixel has the same integer
/// disparity and strong aperiodic texture.
pub fn fronto_plane_scene(rig: &CameraRig, disparity: f64, seed: u64) -> SceneSpec {
    let z = rig.focal_length_px * rig.baseline_m / disparity;
    let (x_range, y_range) = frustum_extent(rig, z);
    SceneSpec {
        seed,
        noise_sigma: 0.0,
        background_class: ClassLabel::Sky,
        background_color: class_color(ClassLabel::Sky),
        primitives: vec![ScenePrimitive {
            shape: Shape::FrontoPlane { depth_m: z, x_range, y_range },
            class: ClassLabel::Tree,
            base_color: [255, 255, 255],
            texture: TextureSpec::Noise { cell_m: 1.6 * z / rig.focal_length_px, lo: 16, hi: 255 },
        }],
    }
}

/// Textured ground plane filling the lower half of the frame; the normals
/// and height oracles lean on this one.
pub fn ground_plane_scene(rig: &CameraRig, seed: u64) -> SceneSpec {
    let f = rig.focal_length_px;
    let h = rig.camera_height_m;
    let cy = rig.principal_point.1;
    let rows_below = rig.image_size.1 as f64 - 1.0 - cy;
    let z_near = f * h / rows_below; // ground at the bottom image row
    let z_far = (f * rig.baseline_m / 1.1).min(f * h / 2.0); // stay under d_max=64's far end
    let half_width = x_half_extent(rig, z_far);
    SceneSpec {
        seed,
        noise_sigma: 0.0,
        background_class: ClassLabel::Sky,
        background_color: class_color(ClassLabel::Sky),
        primitives: vec![ScenePrimitive {
            shape: Shape::GroundPlane {
                x_range: (-half_width, half_width),
                z_range: (z_near * 0.95, z_far),
            },
            class: ClassLabel::Grass,
            base_color: [255, 255, 255],
            texture: TextureSpec::Noise { cell_m: 0.02 * z_near, lo: 16, hi: 255 },
        }],
    }
}

/// Foreground wall covering the left half of the frame in front of a
/// background wall: a clean vertical depth discontinuity with
/// intensity-separable surfaces, for edge-behavior comparisons.
pub fn depth_edge_scene(rig: &CameraRig, d_near: f64, d_far: f64, seed: u64) -> SceneSpec {
    let f = rig.focal_length_px;
    let (cx, _) = rig.principal_point;
    let z_near = f * rig.baseline_m / d_near;
    let z_far = f * rig.baseline_m / d_far;
    let (bg_x, bg_y) = frustum_extent(rig, z_far);
    let (fg_x, fg_y) = frustum_extent(rig, z_near);
    // Foreground's right edge projects to the central column of the left view.
    let mid_x = (rig.image_size.0 as f64 / 2.0 - cx) * z_near / f;
    SceneSpec {
        seed,
        noise_sigma: 0.0,
        background_class: ClassLabel::Sky,
        background_color: class_color(ClassLabel::Sky),
        primitives: vec![
            ScenePrimitive {
                shape: Shape::FrontoPlane {
                    depth_m: z_near,
                    x_range: (fg_x.0, mid_x),
                    y_range: fg_y,
                },
                class: ClassLabel::Bush,
                base_color: [255, 255, 255],
                texture: TextureSpec::Noise {
                    cell_m: 1.6 * z_near / f,
                    lo: 150,
                    hi: 255,
                },
            },
            ScenePrimitive {
                shape: Shape::FrontoPlane { depth_m: z_far, x_range: bg_x, y_range: bg_y },
                class: ClassLabel::Dirt,
                base_color: [255, 255, 255],
                texture: TextureSpec::Noise { cell_m: 1.6 * z_far / f, lo: 10, hi: 105 },
            },
        ],
    }
}

/// Seeded six-class outdoor-style scene for end-to-end dataset runs: ground
/// (grass or dirt), an optional water strip, standing boxes (bush/tree), a
/// far tree line, sky background.
pub fn multi_class_scene(rig: &CameraRig, seed: u64) -> SceneSpec {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5CE0_5CE0));
    let f = rig.focal_length_px;
    let h = rig.camera_height_m;
    let cy = rig.principal_point.1;

    let rows_below = rig.image_size.1 as f64 - 1.0 - cy;
    let z_near = (f * h / rows_below) * 0.9;
    let z_far = f * rig.baseline_m / 1.15;
    let ground_far = z_far * 0.95;
    let half_width = x_half_extent(rig, z_far) + rig.baseline_m;

    let ground_class =
        if rng.random_bool(0.5) { ClassLabel::Grass } else { ClassLabel::Dirt };

    let mut primitives = Vec::new();

    // Water first: coplanar with the ground, so listing it earlier wins the
    // depth tie inside its strip.
    if rng.random_bool(0.7) {
        let w0 = z_near * 1.4 + rng.random_range(0.0..z_near);
        let w1 = w0 + z_near * (0.8 + rng.random_range(0.0..0.8));
        primitives.push(ScenePrimitive {
            shape: Shape::GroundPlane {
                x_range: (-half_width, half_width),
                z_range: (w0, w1.min(ground_far)),
            },
            class: ClassLabel::Water,
            base_color: class_color(ClassLabel::Water),
            texture: TextureSpec::Noise { cell_m: 0.11 * z_near, lo: 200, hi: 255 },
        });
    }

    primitives.push(ScenePrimitive {
        shape: Shape::GroundPlane {
            x_range: (-half_width, half_width),
            z_range: (z_near, ground_far),
        },
        class: ground_class,
        base_color: class_color(ground_class),
        texture: TextureSpec::Noise { cell_m: 0.03 * z_near, lo: 90, hi: 255 },
    });

    // Standing obstacles.
    let n_boxes = rng.random_range(2..=4usize);
    for _ in 0..n_boxes {
        let class = if rng.random_bool(0.5) { ClassLabel::Bush } else { ClassLabel::Tree };
        let z = z_near * (1.3 + rng.random_range(0.0..1.0) * 2.0);
        let max_x = x_half_extent(rig, z);
        let x = rng.random_range(-max_x..max_x);
        let height = h * (0.5 + rng.random_range(0.0..1.2));
        let width = z * rng.random_range(0.18..0.45);
        let depth = width * 0.6;
        primitives.push(ScenePrimitive {
            shape: Shape::BoxShape {
                center: [x, h - height / 2.0, z],
                size: [width, height, depth],
            },
            class,
            base_color: class_color(class),
            texture: TextureSpec::Noise { cell_m: 0.04 * z, lo: 70, hi: 255 },
        });
    }

    // Far tree line from the ground up past the top of the frame.
    let tree_z = ground_far * 1.02;
    let tree_top = -(rig.image_size.1 as f64) * tree_z / f; // well above the view
    primitives.push(ScenePrimitive {
        shape: Shape::FrontoPlane {
            depth_m: tree_z,
            x_range: (-half_width, half_width),
            y_range: (tree_top, h),
        },
        class: ClassLabel::Tree,
        base_color: class_color(ClassLabel::Tree),
        texture: TextureSpec::Noise { cell_m: 0.05 * tree_z, lo: 60, hi: 255 },
    });

    SceneSpec {
        seed: splitmix(seed),
        noise_sigma: 0.0,
        background_class: ClassLabel::Sky,
        background_color: class_color(ClassLabel::Sky),
        primitives,
    }
}

/// World-space x/y rectangle covering both cameras' view frusta at depth z,
/// with a small margin.
fn frustum_extent(rig: &CameraRig, z: f64) -> ((f64, f64), (f64, f64)) {
    let f = rig.focal_length_px;
    let (cx, cy) = rig.principal_point;
    let (w, h) = rig.image_size;
    let margin = 4.0 * z / f;
    let x0 = (0.0 - cx) * z / f - margin;
    let x1 = (w as f64 - cx) * z / f + rig.baseline_m + margin;
    let y0 = (0.0 - cy) * z / f - margin;
    let y1 = (h as f64 - cy) * z / f + margin;
    ((x0, x1), (y0, y1))
}

fn x_half_extent(rig: &CameraRig, z: f64) -> f64 {
    let f = rig.focal_length_px;
    let cx = rig.principal_point.0;
    let w = rig.image_size.0 as f64;
    ((w - cx) * z / f).max(cx * z / f) + 2.0 * z / f
}
