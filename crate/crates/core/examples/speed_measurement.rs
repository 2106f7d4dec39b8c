//! Speeds of tracked vehicles with a known calibration, against ground truth.
//!
//! ```text
//! cargo run --release --example speed_measurement [-- seed]
//! ```

use std::collections::BTreeMap;

use autocalib::pipeline::{measure_scene, track_scene, SceneData};
use autocalib::sim::{generate, NoiseSpec, SceneConfig};
use autocalib::speed::DEFAULT_TAU;
use autocalib::tracking::TrackerParams;

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let noise = NoiseSpec {
        detection_jitter_px: 2.0,
        ..NoiseSpec::default()
    };
    let bundle = generate(SceneConfig::sampled(seed, noise), seed)?;
    let data = SceneData::from_bundle(&bundle);
    let calib = bundle.truth.calibration;

    let tracking = track_scene(&data.detections, &calib, &TrackerParams::default());
    let m = measure_scene(&data, &calib, &tracking, DEFAULT_TAU);
    let truth: BTreeMap<u64, f64> = bundle.truth.passes.iter().map(|p| (p.vehicle_id, p.speed_kmh)).collect();
    let speed: BTreeMap<u64, f64> = m.speeds.iter().map(|s| (s.track_id, s.speed_kmh)).collect();

    println!("track  vehicle  lane  measured  truth   km/h");
    for (track, vehicle) in m.counting.iter().flat_map(|c| &c.matches) {
        let (v, gt) = (speed[track], truth[vehicle]);
        let lane = m.speeds.iter().find(|s| s.track_id == *track).and_then(|s| s.lane);
        println!("{track:5} {vehicle:8} {:>5} {v:9.2} {gt:7.2} {:+6.2}", format!("{lane:?}"), v - gt);
    }
    if let Some(e) = &m.speed_error {
        println!("mean error {:.3} km/h over {} vehicles", e.summary.abs.mean, e.summary.count);
    }
    Ok(())
}
