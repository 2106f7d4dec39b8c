//! Scene scale from wireframe models fitted to tracked vehicles.
//!
//! ```text
//! cargo run --release --example scale_inference [-- seed [density.csv]]
//! ```

use autocalib::pipeline::{builtin_models, track_scene};
use autocalib::scale::{infer_scale, scale_instances, ScaleOptions};
use autocalib::sim::{generate, NoiseSpec, SceneConfig};
use autocalib::tracking::TrackerParams;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let csv = args.next();
    let bundle = generate(SceneConfig::sampled(seed, NoiseSpec::default()), seed)?;
    let calib = bundle.truth.calibration.without_scale();

    let result = track_scene(&bundle.detections, &calib, &TrackerParams::default());
    let tracks: Vec<_> = result.pairs().map(|p| p.0.clone()).collect();
    let geometry: Vec<_> = result.pairs().map(|p| p.1.clone()).collect();
    let instances = scale_instances(&tracks, &geometry);
    let est = infer_scale(&instances, &builtin_models(), &calib, None, &ScaleOptions::default())?;

    println!(
        "{} vehicle instances, {} samples above the IoU threshold",
        est.instances, est.samples
    );
    println!(
        "prior λ0 {:.3}, KDE mode {:.4}, truth {:.4}",
        est.lambda0, est.lambda, bundle.truth.scale
    );
    println!("error {:+.3}%", (est.lambda / bundle.truth.scale - 1.0) * 100.0);

    if let Some(path) = csv {
        let body: String = est.kde.density.iter().map(|(l, d)| format!("{l},{d}\n")).collect();
        std::fs::write(&path, format!("lambda,density\n{body}"))?;
        println!("wrote {path}");
    }
    Ok(())
}
