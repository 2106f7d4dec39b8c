//! Auto-calibrates simulated scenes and compares against their ground truth.
//!
//! ```text
//! cargo run --release --example closed_loop -- [scenes] [--noisy]
//! ```

use std::time::Instant;

use autocalib::pipeline::{builtin_models, run_scene, CalibSource, PipelineOptions, ScaleContext, ScaleSource, SceneData};
use autocalib::sim::{generate, NoiseSpec, SceneConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scenes: u64 = args.iter().find_map(|a| a.parse().ok()).unwrap_or(3);
    let noise = if args.iter().any(|a| a == "--noisy") {
        NoiseSpec {
            trajectory_sigma_px: 0.5,
            edge_outlier_fraction: 0.2,
            detection_jitter_px: 2.0,
            marking_sigma_px: 0.0,
        }
    } else {
        NoiseSpec::default()
    };
    let models = builtin_models();
    let ctx = ScaleContext {
        models: &models,
        regression: None,
    };
    let opts = PipelineOptions::default();
    println!("seed  tilt   pan  f/w   dVP1px  dVP2px   df%    dλ%   speed%  recall");
    for seed in 0..scenes {
        let start = Instant::now();
        let cfg = SceneConfig::sampled(seed, noise);
        let bundle = generate(cfg.clone(), seed)?;
        let data = SceneData::from_bundle(&bundle);
        let r = run_scene(&data, CalibSource::Auto, ScaleSource::Bbox, &ctx, &opts)?;
        let t = &bundle.truth;
        let c = &r.calibration.calibration;
        let speed = r
            .measurement
            .speed_error
            .as_ref()
            .and_then(|e| e.summary.rel)
            .map(|s| s.mean)
            .unwrap_or(f64::NAN);
        let recall = r.measurement.counting.as_ref().map(|c| c.recall).unwrap_or(f64::NAN);
        println!(
            "{seed:>4} {:5.1} {:5.1} {:4.2} {:8.3} {:7.2} {:6.3} {:6.3} {:7.3} {:6.2}  ({:.1}s)",
            cfg.camera.tilt_deg,
            cfg.camera.pan_deg,
            cfg.camera.focal_px / cfg.image.width as f64,
            c.vp1.distance(t.vp1),
            c.vp2.distance(t.vp2),
            (c.focal / t.focal - 1.0) * 100.0,
            (r.scale.lambda / t.scale - 1.0) * 100.0,
            speed,
            recall,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
