//! Tracks simulated detections and builds 3D bounding boxes along each track.
//!
//! ```text
//! cargo run --release --example tracking [-- seed]
//! ```

use autocalib::pipeline::track_scene;
use autocalib::sim::{generate, NoiseSpec, SceneConfig};
use autocalib::tracking::TrackerParams;

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let noise = NoiseSpec {
        detection_jitter_px: 2.0,
        ..NoiseSpec::default()
    };
    let bundle = generate(SceneConfig::sampled(seed, noise), seed)?;
    let calib = bundle.truth.calibration;

    let result = track_scene(&bundle.detections, &calib, &TrackerParams::default());
    println!("{} detections -> {} tracks", bundle.detections.len(), result.tracks.len());
    for (track, geom) in result.pairs() {
        let refs = geom.reference_points();
        let (first, last) = (refs.first().unwrap(), refs.last().unwrap());
        println!(
            "track {:3} {:6} {:3} boxes {:?}  ({:.0}, {:.0}) -> ({:.0}, {:.0})",
            track.id,
            track.class(),
            geom.samples.len(),
            geom.travel,
            first.1.x,
            first.1.y,
            last.1.x,
            last.1.y
        );
    }
    Ok(())
}
