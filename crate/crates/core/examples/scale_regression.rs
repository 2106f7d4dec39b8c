//! Fits the linear scale correction on training scenes and writes it for
//! `autocalib ... --scale-source bbox+reg --regression <file>`.
//!
//! ```text
//! cargo run --release --example scale_regression -- <regression.json> [model_factor]
//! ```

use std::path::PathBuf;

use autocalib::io::write_regression;
use autocalib::pipeline::{builtin_models, track_scene};
use autocalib::scale::{fit_scale_regression, infer_scale, scale_instances, ScaleOptions};
use autocalib::sim::{generate, NoiseSpec, SceneConfig};
use autocalib::tracking::TrackerParams;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(
        args.next()
            .ok_or_else(|| anyhow::anyhow!("usage: scale_regression <out.json> [model_factor]"))?,
    );
    // Deliberately mis-sized models show what the correction absorbs.
    let factor: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1.05);
    let models = builtin_models().into_iter().map(|(k, m)| (k, m.scaled(factor))).collect();

    let mut pairs = Vec::new();
    for seed in 200..206 {
        let bundle = generate(SceneConfig::sampled(seed, NoiseSpec::default()), seed)?;
        let calib = bundle.truth.calibration.without_scale();
        let result = track_scene(&bundle.detections, &calib, &TrackerParams::default());
        let tracks: Vec<_> = result.pairs().map(|p| p.0.clone()).collect();
        let geometry: Vec<_> = result.pairs().map(|p| p.1.clone()).collect();
        let est = infer_scale(
            &scale_instances(&tracks, &geometry),
            &models,
            &calib,
            None,
            &ScaleOptions::default(),
        )?;
        println!("seed {seed}: λ* {:.4}, truth {:.4}", est.lambda, bundle.truth.scale);
        pairs.push((est.lambda, bundle.truth.scale));
    }
    let reg = fit_scale_regression(&pairs)?;
    println!("λ ≈ {:.5} λ* + {:.5}", reg.alpha, reg.beta);
    write_regression(&out, &reg)?;
    println!("wrote {}", out.display());
    Ok(())
}
