//! Compares calibration and scale sources on one scene with the report metrics.
//!
//! ```text
//! cargo run --release --example evaluation [-- seed]
//! ```

use autocalib::pipeline::{builtin_models, evaluate_system, run_scene, CalibSource, PipelineOptions, ScaleContext, ScaleSource, SceneData};
use autocalib::sim::{generate, NoiseSpec, SceneConfig};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(6);
    let noise = NoiseSpec {
        trajectory_sigma_px: 0.5,
        edge_outlier_fraction: 0.2,
        detection_jitter_px: 2.0,
        marking_sigma_px: 1.0,
    };
    let bundle = generate(SceneConfig::sampled(seed, noise), seed)?;
    let data = SceneData::from_bundle(&bundle);
    let models = builtin_models();
    let ctx = ScaleContext {
        models: &models,
        regression: None,
    };
    let opts = PipelineOptions::default();

    println!("system           ratio%  dist m   speed km/h  recall  FPPM");
    let systems = [
        (CalibSource::Auto, ScaleSource::Bbox),
        (CalibSource::Auto, ScaleSource::Speed),
        (CalibSource::Manual, ScaleSource::Manual),
        (CalibSource::Oracle, ScaleSource::Oracle),
    ];
    for (c, s) in systems {
        let r = run_scene(&data, c, s, &ctx, &opts)?;
        let report = evaluate_system(&r.scaled_calibration(), Some(&bundle.truth.markings), &r.measurement);
        let mean = |e: Option<autocalib::eval::ErrorSummary>| e.map_or(f64::NAN, |e| e.abs.mean);
        let counting = report.counting.as_ref();
        println!(
            "{:16} {:6.3} {:7.3} {:11.3} {:7.2} {:5.2}",
            format!("{c:?}/{s:?}"),
            report.ratio.and_then(|e| e.rel).map_or(f64::NAN, |e| e.mean),
            mean(report.distance_all),
            mean(report.speed),
            counting.map_or(f64::NAN, |c| c.recall),
            counting.map_or(f64::NAN, |c| c.fppm)
        );
    }
    Ok(())
}
