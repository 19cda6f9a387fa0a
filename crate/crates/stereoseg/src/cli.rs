//! Batch pipeline driver: subcommands binding the library stages together.
//!
//! Every subcommand is deterministic given its inputs, seeds and parameters,
//! and exits 0 only when all requested artifacts were written. `--verbose`
//! logs the full parsed parameter set for provenance.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{
    read_container, split_dataset, write_container, DatasetIndex, LabelMap, Palette,
};
use crate::encodings::{encode_variant, EncodingKind, EncodingVariant, StereoSource};
use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::metrics::{
    confusion_matrix, format_report, read_metrics_csv, write_metrics_csv, ConfusionMatrix,
    MetricsReport,
};
use crate::mininet::{
    load_checkpoint, save_checkpoint, train, write_loss_csv, MiniNet, Tensor, TrainConfig,
};
use crate::parallel::map_ordered;
use crate::raster::{GrayImage, RgbImage};
use crate::stereo::{asw_disparity, sgbm_disparity, AswParams, DisparityMap, SgbmParams};
use crate::synthscene::{render_scene, SceneSpec};

#[derive(Debug, Parser)]
#[command(name = "stereoseg", version, about = "Stereo depth features for pixelwise labelling")]
struct Cli {
    /// Camera rig TOML (required by encode and render-synthetic).
    #[arg(long, global = true)]
    rig: Option<PathBuf>,
    /// Worker threads for per-image batch stages.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for every stage that draws random numbers.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Log parameters and progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Algo {
    Sgbm,
    Asw,
}

#[derive(Debug, Args)]
struct MatchArgs {
    /// Smallest disparity candidate, pixels.
    #[arg(long, default_value_t = 1)]
    d_min: u32,
    /// Largest disparity candidate, pixels.
    #[arg(long, default_value_t = 64)]
    d_max: u32,
    /// Small smoothness penalty (path aggregation only).
    #[arg(long, default_value_t = 8)]
    p1: u32,
    /// Large smoothness penalty (path aggregation only).
    #[arg(long, default_value_t = 32)]
    p2: u32,
    /// Aggregation directions, 4 or 8 (path aggregation only).
    #[arg(long, default_value_t = 8)]
    paths: u32,
    /// Winner margin in percent.
    #[arg(long, default_value_t = 10)]
    uniqueness: u32,
    /// Left/right disagreement tolerance, pixels.
    #[arg(long, default_value_t = 1.0)]
    lr_max_diff: f32,
    /// Support window radius (support-weight matcher only).
    #[arg(long, default_value_t = 16)]
    radius: u32,
    /// Intensity-similarity falloff (support-weight matcher only).
    #[arg(long, default_value_t = 14.0)]
    gamma_color: f32,
    /// Spatial falloff in pixels (support-weight matcher only).
    #[arg(long, default_value_t = 17.5)]
    gamma_spatial: f32,
}

impl MatchArgs {
    fn sgbm(&self) -> Result<SgbmParams> {
        let params = SgbmParams {
            d_min: self.d_min,
            d_max: self.d_max,
            p1: self.p1,
            p2: self.p2,
            num_paths: self.paths,
            uniqueness_ratio: self.uniqueness,
            lr_max_diff: self.lr_max_diff,
        };
        params.validate()?;
        Ok(params)
    }

    fn asw(&self) -> Result<AswParams> {
        let params = AswParams {
            window_radius: self.radius,
            gamma_color: self.gamma_color,
            gamma_spatial: self.gamma_spatial,
            d_min: self.d_min,
            d_max: self.d_max,
            lr_max_diff: self.lr_max_diff,
            uniqueness_ratio: self.uniqueness,
        };
        params.validate()?;
        Ok(params)
    }

    fn run(&self, algo: Algo, left: &GrayImage, right: &GrayImage) -> Result<DisparityMap> {
        match algo {
            Algo::Sgbm => sgbm_disparity(left, right, &self.sgbm()?),
            Algo::Asw => asw_disparity(left, right, &self.asw()?),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Match a rectified pair and write the disparity as 16-bit PNG.
    Stereo {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long, value_enum)]
        algo: Algo,
        /// Output 16-bit PNG (disparity * 256, zero = invalid).
        #[arg(long)]
        out: PathBuf,
        /// Optional 8-bit false-color visualization.
        #[arg(long)]
        color_out: Option<PathBuf>,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Build a packed multi-channel container from a stereo pair.
    Encode {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// Channel layout: rgb, rgbd, rgbh, rgba, rgbn or rgbdha.
        #[arg(long)]
        kind: String,
        /// Matcher for depth-bearing layouts: sgbm or asw.
        #[arg(long)]
        stereo: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Also export each packed plane as a grayscale PNG into this
        /// directory.
        #[arg(long)]
        dump_channels: Option<PathBuf>,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Render a synthetic scene: stereo pair, ground-truth disparity,
    /// labels, occlusion mask and metadata.
    RenderSynthetic {
        /// Scene description TOML.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Color table for the label PNG (defaults to the built-in palette).
        #[arg(long)]
        palette: Option<PathBuf>,
    },
    /// Split a dataset manifest into train and test manifests.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Training fraction in (0, 1).
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Train the classifier on a manifest of containers + label PNGs.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint_out: PathBuf,
        /// Per-iteration loss curve CSV.
        #[arg(long)]
        loss_out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0.001)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        #[arg(long, default_value_t = 16)]
        stage1_filters: usize,
        #[arg(long, default_value_t = 32)]
        stage2_filters: usize,
        #[arg(long)]
        palette: Option<PathBuf>,
    },
    /// Predict label PNGs for every container in a manifest.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        palette: Option<PathBuf>,
    },
    /// Score predicted label PNGs against ground-truth label PNGs paired by
    /// file name; writes a one-row metrics CSV and prints the table.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        /// Variant tag recorded in the report (e.g. "RGBH (SGBM)").
        #[arg(long)]
        variant: String,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        palette: Option<PathBuf>,
    },
    /// Merge metrics CSVs into one table with best values marked.
    Report {
        /// Metrics CSVs produced by eval.
        inputs: Vec<PathBuf>,
        /// Write the table here as well as printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse arguments and run. Returns the process exit code: 0 on success,
/// 1 on a runtime failure, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message (including --help/--version, which
            // exit successfully).
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    log::info!("parameters: {cli:?}");
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Stereo { left, right, algo, out, color_out, matching } => {
            let l = GrayImage::load_png(left)?;
            let r = GrayImage::load_png(right)?;
            let map = matching.run(*algo, &l, &r)?;
            map.save_png(out)?;
            if let Some(color) = color_out {
                map.false_color().save_png(color)?;
            }
            log::info!("disparity: {:.1}% valid", 100.0 * map.valid_fraction());
            Ok(())
        }
        Command::Encode { left, right, kind, stereo, out, dump_channels, matching } => {
            let rig = require_rig(cli)?;
            let kind = EncodingKind::parse(kind)?;
            let source = match stereo {
                Some(s) => Some(StereoSource::parse(s)?),
                None => None,
            };
            let variant = EncodingVariant::new(kind, source)?;
            let left_rgb = RgbImage::load_png(left)?;
            let dmap = if kind == EncodingKind::Rgb {
                None
            } else {
                let l = left_rgb.to_luma();
                let r = GrayImage::load_png(right)?;
                let algo = match variant.source().expect("validated above") {
                    StereoSource::Sgbm => Algo::Sgbm,
                    StereoSource::Asw => Algo::Asw,
                };
                Some(matching.run(algo, &l, &r)?)
            };
            let img = encode_variant(&left_rgb, dmap.as_ref(), &rig, variant)?;
            write_container(&img, rig.config_hash(), out)?;
            if let Some(dir) = dump_channels {
                std::fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
                for (i, plane) in img.planes().iter().enumerate() {
                    plane.save_png(&dir.join(format!("channel_{i}.png")))?;
                }
            }
            Ok(())
        }
        Command::RenderSynthetic { scene, out_dir, palette } => {
            let rig = require_rig(cli)?;
            let spec = SceneSpec::load(scene)?;
            let palette = load_palette(palette)?;
            std::fs::create_dir_all(out_dir).map_err(|e| Error::io_at(out_dir, e))?;
            let rendered = render_scene(&spec, &rig)?;
            rendered.left.save_png(&out_dir.join("left.png"))?;
            rendered.right.save_png(&out_dir.join("right.png"))?;
            rendered.gt.disparity().save_png(&out_dir.join("gt_disparity.png"))?;
            rendered.gt.labels().save_png(&palette, &out_dir.join("labels.png"))?;
            occlusion_mask(&rendered.gt).save_png(&out_dir.join("occlusion.png"))?;
            write_scene_metadata(&spec, &rig, &rendered.gt, &out_dir.join("gt.toml"))?;
            Ok(())
        }
        Command::Split { manifest, ratio, train_out, test_out } => {
            let index = DatasetIndex::load(manifest)?;
            let (train_ids, test_ids) = split_dataset(&index.ids(), *ratio, cli.seed)?;
            index.subset(&train_ids)?.save(train_out)?;
            index.subset(&test_ids)?.save(test_out)?;
            log::info!("split: {} train, {} test", train_ids.len(), test_ids.len());
            Ok(())
        }
        Command::Train {
            manifest,
            checkpoint_out,
            loss_out,
            iterations,
            learning_rate,
            momentum,
            stage1_filters,
            stage2_filters,
            palette,
        } => {
            let palette = load_palette(palette)?;
            let index = DatasetIndex::load(manifest)?;
            if index.entries.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let mut data = Vec::with_capacity(index.entries.len());
            for entry in &index.entries {
                let (img, _) = read_container(&entry.image)?;
                let labels = LabelMap::load_png(&palette, &entry.label)?;
                data.push((img, labels));
            }
            let cfg = TrainConfig {
                learning_rate: *learning_rate,
                momentum: *momentum,
                iterations: *iterations,
                seed: cli.seed,
            };
            cfg.validate()?;
            let net = MiniNet::new(
                data[0].0.channel_count(),
                *stage1_filters,
                *stage2_filters,
                6,
                cli.seed,
            );
            let (trained, curve) = train(net, &data, &cfg)?;
            save_checkpoint(&trained, checkpoint_out)?;
            write_loss_csv(&curve, loss_out)?;
            log::info!(
                "trained {} iterations, final loss {:.4}",
                curve.len(),
                curve.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Predict { checkpoint, manifest, out_dir, palette } => {
            let palette = load_palette(palette)?;
            let net = load_checkpoint(checkpoint)?;
            let index = DatasetIndex::load(manifest)?;
            std::fs::create_dir_all(out_dir).map_err(|e| Error::io_at(out_dir, e))?;
            let results = map_ordered(cli.jobs, index.entries.clone(), |_, entry| {
                let (img, _) = read_container(&entry.image)?;
                let labels = net.predict_labels(&Tensor::from_multichannel(&img))?;
                labels.save_png(&palette, &out_dir.join(format!("{}.png", entry.id)))?;
                Ok::<_, Error>(())
            });
            for r in results {
                r?;
            }
            Ok(())
        }
        Command::Eval { pred_dir, gt_dir, variant, out_csv, palette } => {
            let palette = load_palette(palette)?;
            let names = png_names(pred_dir)?;
            if names.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let matrices = map_ordered(cli.jobs, names, |_, name| {
                let pred = LabelMap::load_png(&palette, &pred_dir.join(name))?;
                let gt = LabelMap::load_png(&palette, &gt_dir.join(name))?;
                confusion_matrix(&pred, &gt)
            });
            let mut cm = ConfusionMatrix::new();
            for m in matrices {
                cm.merge(&m?);
            }
            let report = MetricsReport::from_confusion(variant.clone(), &cm)?;
            write_metrics_csv(std::slice::from_ref(&report), out_csv)?;
            print!("{}", format_report(std::slice::from_ref(&report))?);
            Ok(())
        }
        Command::Report { inputs, out } => {
            if inputs.is_empty() {
                return Err(Error::InvalidParams("no metrics CSVs given".into()));
            }
            let mut reports = Vec::new();
            for path in inputs {
                reports.extend(read_metrics_csv(path)?);
            }
            let table = format_report(&reports)?;
            if let Some(path) = out {
                std::fs::write(path, &table).map_err(|e| Error::io_at(path, e))?;
            }
            print!("{table}");
            Ok(())
        }
    }
}

fn require_rig(cli: &Cli) -> Result<CameraRig> {
    let path = cli
        .rig
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("this subcommand needs --rig".into()))?;
    CameraRig::load(path)
}

fn load_palette(path: &Option<PathBuf>) -> Result<Palette> {
    match path {
        Some(p) => Palette::load(p),
        None => Ok(Palette::default()),
    }
}

/// Sorted list of `*.png` file names in a directory.
fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io_at(dir, e))? {
        let entry = entry.map_err(|e| Error::io_at(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn occlusion_mask(gt: &crate::synthscene::GroundTruth) -> GrayImage {
    let mut img = GrayImage::new(gt.width(), gt.height());
    for v in 0..gt.height() {
        for u in 0..gt.width() {
            if gt.is_occluded(u, v) {
                img.set(u, v, 255);
            }
        }
    }
    img
}

#[derive(Serialize)]
struct SceneMetadata {
    seed: u64,
    noise_sigma: f64,
    rig_hash: u64,
    width: u32,
    height: u32,
    surface_pixels: usize,
    occluded_pixels: usize,
    class_pixels: std::collections::BTreeMap<String, usize>,
}

fn write_scene_metadata(
    spec: &SceneSpec,
    rig: &CameraRig,
    gt: &crate::synthscene::GroundTruth,
    path: &Path,
) -> Result<()> {
    let mut class_pixels = std::collections::BTreeMap::new();
    for &label in gt.labels().labels() {
        *class_pixels.entry(label.name().to_string()).or_insert(0) += 1;
    }
    let meta = SceneMetadata {
        seed: spec.seed,
        noise_sigma: spec.noise_sigma,
        rig_hash: rig.config_hash(),
        width: gt.width(),
        height: gt.height(),
        surface_pixels: gt.disparity().valid_count(),
        occluded_pixels: gt.occluded_count(),
        class_pixels,
    };
    let text = toml::to_string(&meta).expect("metadata serializes");
    std::fs::write(path, text).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}

// ClassLabel is referenced from the palette default; keep the import honest.
#[allow(dead_code)]
fn _class_label_used(_: ClassLabel) {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_error_exits_2() {
        assert_eq!(run(["stereoseg", "no-such-subcommand"]), 2);
        assert_eq!(run(["stereoseg", "stereo", "--left"]), 2);
    }

    #[test]
    fn missing_input_exits_1() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.png");
        let code = run([
            "stereoseg",
            "stereo",
            "--left",
            "/nonexistent/left.png",
            "--right",
            "/nonexistent/right.png",
            "--algo",
            "sgbm",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
        assert!(!out.exists());
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(["stereoseg", "--help"]), 0);
    }
}
