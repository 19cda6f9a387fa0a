//! Labels, deterministic splits, and the on-disk container format.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encodings::{Channel8, EncodingKind, EncodingVariant, MultiChannelImage, StereoSource};
use crate::error::{Error, Result};
use crate::raster::RgbImage;

/// Number of scoreable classes.
pub const CLASS_COUNT: usize = 6;

/// Pixel class vocabulary: six scoreable classes plus an ignore label for
/// unannotated pixels, which is excluded from every metric denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ClassLabel {
    Sky = 0,
    Water = 1,
    Dirt = 2,
    Grass = 3,
    Bush = 4,
    Tree = 5,
    Ignore = 6,
}

impl ClassLabel {
    pub const SCOREABLE: [ClassLabel; CLASS_COUNT] = [
        ClassLabel::Sky,
        ClassLabel::Water,
        ClassLabel::Dirt,
        ClassLabel::Grass,
        ClassLabel::Bush,
        ClassLabel::Tree,
    ];

    /// Index into metric tables, or `None` for the ignore label.
    pub fn class_index(self) -> Option<usize> {
        match self {
            ClassLabel::Ignore => None,
            other => Some(other as usize),
        }
    }

    pub fn from_class_index(i: usize) -> Option<ClassLabel> {
        ClassLabel::SCOREABLE.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Sky => "sky",
            ClassLabel::Water => "water",
            ClassLabel::Dirt => "dirt",
            ClassLabel::Grass => "grass",
            ClassLabel::Bush => "bush",
            ClassLabel::Tree => "tree",
            ClassLabel::Ignore => "ignore",
        }
    }

    pub fn parse(s: &str) -> Result<ClassLabel> {
        match s.to_ascii_lowercase().as_str() {
            "sky" => Ok(ClassLabel::Sky),
            "water" => Ok(ClassLabel::Water),
            "dirt" => Ok(ClassLabel::Dirt),
            "grass" => Ok(ClassLabel::Grass),
            "bush" => Ok(ClassLabel::Bush),
            "tree" => Ok(ClassLabel::Tree),
            "ignore" => Ok(ClassLabel::Ignore),
            other => Err(Error::InvalidParams(format!("unknown class '{other}'"))),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-pixel class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<ClassLabel>,
}

impl LabelMap {
    pub fn filled(width: u32, height: u32, label: ClassLabel) -> Self {
        Self { width, height, labels: vec![label; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> ClassLabel {
        self.labels[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, label: ClassLabel) {
        self.labels[v as usize * self.width as usize + u as usize] = label;
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    /// Render through a palette for storage as a color PNG.
    pub fn to_rgb(&self, palette: &Palette) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                img.set(u, v, palette.color_of(self.get(u, v)));
            }
        }
        img
    }

    pub fn save_png(&self, palette: &Palette, path: &Path) -> Result<()> {
        self.to_rgb(palette).save_png(path)
    }

    pub fn load_png(palette: &Palette, path: &Path) -> Result<Self> {
        let img = RgbImage::load_png(path)?;
        let (map, _) = ingest_label_image(&img, palette, true)?;
        Ok(map)
    }
}

/// Exact color-to-class lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    entries: Vec<([u8; 3], ClassLabel)>,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            entries: vec![
                ([135, 206, 235], ClassLabel::Sky),
                ([0, 64, 255], ClassLabel::Water),
                ([139, 90, 43], ClassLabel::Dirt),
                ([64, 200, 64], ClassLabel::Grass),
                ([0, 112, 32], ClassLabel::Bush),
                ([96, 64, 16], ClassLabel::Tree),
                ([0, 0, 0], ClassLabel::Ignore),
            ],
        }
    }
}

impl Palette {
    pub fn label_of(&self, color: [u8; 3]) -> Option<ClassLabel> {
        self.entries.iter().find(|(c, _)| *c == color).map(|(_, l)| *l)
    }

    pub fn color_of(&self, label: ClassLabel) -> [u8; 3] {
        self.entries
            .iter()
            .find(|(_, l)| *l == label)
            .map(|(c, _)| *c)
            .unwrap_or([0, 0, 0])
    }

    /// Text format: one `R,G,B,class_name` line per entry; `#` comments.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(Error::format(path, format!("line {}: want R,G,B,class", ln + 1)));
            }
            let chan = |s: &str| -> Result<u8> {
                s.parse::<u8>()
                    .map_err(|_| Error::format(path, format!("line {}: bad byte '{s}'", ln + 1)))
            };
            let color = [chan(parts[0])?, chan(parts[1])?, chan(parts[2])?];
            entries.push((color, ClassLabel::parse(parts[3])?));
        }
        if entries.is_empty() {
            return Err(Error::format(path, "empty palette"));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::from("# R,G,B,class\n");
        for (c, l) in &self.entries {
            text.push_str(&format!("{},{},{},{}\n", c[0], c[1], c[2], l.name()));
        }
        std::fs::write(path, text).map_err(|e| Error::io_at(path, e))?;
        Ok(())
    }
}

/// Counts of pixels the ingest could not map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub unknown_pixels: usize,
    /// First offender: (u, v, color). Handy in warnings.
    pub first_unknown: Option<(u32, u32, [u8; 3])>,
}

/// Convert a color-coded annotation image into labels by exact palette
/// lookup. In strict mode any unmapped color is an error naming the pixel;
/// otherwise unmapped pixels become ignore and are tallied in the summary.
pub fn ingest_label_image(
    img: &RgbImage,
    palette: &Palette,
    strict: bool,
) -> Result<(LabelMap, IngestSummary)> {
    let mut map = LabelMap::filled(img.width(), img.height(), ClassLabel::Ignore);
    let mut summary = IngestSummary::default();
    for v in 0..img.height() {
        for u in 0..img.width() {
            let color = img.get(u, v);
            match palette.label_of(color) {
                Some(label) => map.set(u, v, label),
                None if strict => {
                    return Err(Error::UnknownColor {
                        r: color[0],
                        g: color[1],
                        b: color[2],
                        u,
                        v,
                    });
                }
                None => {
                    summary.unknown_pixels += 1;
                    summary.first_unknown.get_or_insert((u, v, color));
                }
            }
        }
    }
    Ok((map, summary))
}

/// One dataset sample: an identifier and the paths to its image (or packed
/// container) and label annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleEntry {
    pub id: String,
    pub image: PathBuf,
    pub label: PathBuf,
}

/// Line-oriented manifest: `id <TAB> image_path <TAB> label_path`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    pub entries: Vec<SampleEntry>,
}

impl DatasetIndex {
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&SampleEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Keep only the listed ids, in the order given.
    pub fn subset(&self, ids: &[String]) -> Result<DatasetIndex> {
        let mut entries = Vec::with_capacity(ids.len());
        for id in ids {
            let entry = self
                .get(id)
                .ok_or_else(|| Error::InvalidParams(format!("unknown sample id '{id}'")))?;
            entries.push(entry.clone());
        }
        Ok(DatasetIndex { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::format(
                    path,
                    format!("line {}: want id<TAB>image<TAB>label", ln + 1),
                ));
            }
            entries.push(SampleEntry {
                id: parts[0].to_string(),
                image: PathBuf::from(parts[1]),
                label: PathBuf::from(parts[2]),
            });
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&format!("{}\t{}\t{}\n", e.id, e.image.display(), e.label.display()));
        }
        std::fs::write(path, text).map_err(|e| Error::io_at(path, e))?;
        Ok(())
    }
}

/// Deterministic train/test split: a seeded shuffle, then the first
/// `floor(ratio * n)` ids become the training set. The same (ids, ratio,
/// seed) always yields the same split.
pub fn split_dataset(ids: &[String], ratio: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if ids.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParams(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut shuffled: Vec<String> = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates; spelled out so the stream layout is pinned by this crate
    // rather than an external shuffle implementation.
    for i in (1..shuffled.len()).rev() {
        let j = rng.random_range(0..=i);
        shuffled.swap(i, j);
    }
    let n_train = (ratio * shuffled.len() as f64).floor() as usize;
    let test = shuffled.split_off(n_train);
    Ok((shuffled, test))
}

const CONTAINER_MAGIC: &[u8; 4] = b"MCIM";
const CONTAINER_VERSION: u8 = 1;

/// Write a packed image as a self-describing binary container.
///
/// Layout (little-endian):
/// magic "MCIM", version u8, kind tag u8, source tag u8, channel count u8,
/// width u32, height u32, rig hash u64, then the planes back to back as raw
/// 8-bit rows.
pub fn write_container(img: &MultiChannelImage, rig_hash: u64, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut header = Vec::with_capacity(24);
    header.extend_from_slice(CONTAINER_MAGIC);
    header.push(CONTAINER_VERSION);
    header.push(img.variant().kind().tag());
    header.push(img.variant().source().map_or(0, |s| s.tag()));
    header.push(img.channel_count() as u8);
    header.extend_from_slice(&img.width().to_le_bytes());
    header.extend_from_slice(&img.height().to_le_bytes());
    header.extend_from_slice(&rig_hash.to_le_bytes());
    file.write_all(&header).map_err(|e| Error::io_at(path, e))?;
    for plane in img.planes() {
        file.write_all(plane.values()).map_err(|e| Error::io_at(path, e))?;
    }
    Ok(())
}

/// Read a container back; returns the image and the rig hash recorded in the
/// header. Truncated files, bad magic, and headers whose channel count does
/// not match their kind are rejected.
pub fn read_container(path: &Path) -> Result<(MultiChannelImage, u64)> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut header = [0u8; 24];
    file.read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated header"))?;
    if &header[0..4] != CONTAINER_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    if header[4] != CONTAINER_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", header[4])));
    }
    let kind = EncodingKind::from_tag(header[5])
        .ok_or_else(|| Error::format(path, format!("unknown kind tag {}", header[5])))?;
    let source: Option<StereoSource> = StereoSource::from_tag(header[6])
        .ok_or_else(|| Error::format(path, format!("unknown source tag {}", header[6])))?;
    let channel_count = header[7] as usize;
    let width = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let height = u32::from_le_bytes(header[12..16].try_into().unwrap());
    let rig_hash = u64::from_le_bytes(header[16..24].try_into().unwrap());

    if channel_count != kind.channel_count() {
        return Err(Error::Consistency(format!(
            "header says {kind} with {channel_count} planes, expected {}",
            kind.channel_count()
        )));
    }
    let variant = EncodingVariant::new(kind, source)
        .map_err(|_| Error::Consistency(format!("kind {kind} with source tag {}", header[6])))?;

    let plane_len = width as usize * height as usize;
    let mut rest = Vec::new();
    file.read_to_end(&mut rest).map_err(|e| Error::io_at(path, e))?;
    if rest.len() != plane_len * channel_count {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, expected {}", rest.len(), plane_len * channel_count),
        ));
    }
    let mut planes = Vec::with_capacity(channel_count);
    for c in 0..channel_count {
        let values = rest[c * plane_len..(c + 1) * plane_len].to_vec();
        planes.push(Channel8::from_values(width, height, values)?);
    }
    Ok((MultiChannelImage::from_planes(variant, planes)?, rig_hash))
}
