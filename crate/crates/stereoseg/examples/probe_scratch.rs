use std::time::Instant;

use stereoseg::geometry::CameraRig;
use stereoseg::stereo::{asw_disparity, sgbm_disparity, AswParams, SgbmParams};
use stereoseg::synthscene::{depth_edge_scene, fronto_plane_scene, render_scene};

fn score(
    map: &stereoseg::stereo::DisparityMap,
    gt: &stereoseg::synthscene::GroundTruth,
    truth: f32,
) -> (f64, f64) {
    let mut valid = 0usize;
    let mut correct = 0usize;
    let mut total = 0usize;
    for v in 0..map.height() {
        for u in 0..map.width() {
            if gt.is_occluded(u, v) || !gt.disparity().is_valid(u, v) {
                continue;
            }
            total += 1;
            if let Some(d) = map.get(u, v) {
                valid += 1;
                if (d - truth).abs() < 0.5 {
                    correct += 1;
                }
            }
        }
    }
    (correct as f64 / valid.max(1) as f64, valid as f64 / total.max(1) as f64)
}

fn main() {
    let rig = CameraRig::default();
    for sigma in [0.0, 5.0] {
        for d in [4.0, 16.0, 48.0] {
            let mut scene = fronto_plane_scene(&rig, d, 42);
            scene.noise_sigma = sigma;
            let rendered = render_scene(&scene, &rig).unwrap();
            let (lg, rg) = (rendered.left.to_luma(), rendered.right.to_luma());

            let t0 = Instant::now();
            let sg = sgbm_disparity(&lg, &rg, &SgbmParams::default()).unwrap();
            let t_sgbm = t0.elapsed().as_secs_f64();
            let (acc_s, val_s) = score(&sg, &rendered.gt, d as f32);

            let t0 = Instant::now();
            let aw = asw_disparity(&lg, &rg, &AswParams::default()).unwrap();
            let t_asw = t0.elapsed().as_secs_f64();
            let (acc_a, val_a) = score(&aw, &rendered.gt, d as f32);

            println!(
                "sigma={sigma} d={d}: SGBM acc={acc_s:.4} valid={val_s:.3} t={t_sgbm:.2}s | ASW acc={acc_a:.4} valid={val_a:.3} t={t_asw:.2}s"
            );
        }
    }

    // Depth edge comparison fixture.
    let rig = CameraRig {
        image_size: (160, 120),
        principal_point: (80.0, 60.0),
        ..CameraRig::default()
    };
    let scene = depth_edge_scene(&rig, 40.0, 10.0, 4);
    let rendered = render_scene(&scene, &rig).unwrap();
    let (lg, rg) = (rendered.left.to_luma(), rendered.right.to_luma());
    let sg = sgbm_disparity(&lg, &rg, &SgbmParams::default()).unwrap();
    let aw = asw_disparity(&lg, &rg, &AswParams::default()).unwrap();
    for (name, map) in [("SGBM", &sg), ("ASW", &aw)] {
        let mut err_sum = 0.0f64;
        let mut n = 0usize;
        let mut nvalid = 0usize;
        let mut band = 0usize;
        for v in 0..120u32 {
            for u in 78..82u32 {
                if rendered.gt.is_occluded(u, v) {
                    continue;
                }
                let t = rendered.gt.disparity().get(u, v).unwrap();
                band += 1;
                if let Some(d) = map.get(u, v) {
                    nvalid += 1;
                    err_sum += (d - t).abs() as f64;
                    n += 1;
                }
            }
        }
        println!(
            "{name}: edge-band MAE={:.3} over {n} valid of {band} ({} valid total)",
            err_sum / n.max(1) as f64,
            nvalid
        );
    }
}
