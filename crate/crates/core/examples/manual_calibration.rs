//! Calibration from annotated lines and measured distances on the road.
//!
//! ```text
//! cargo run --release --example manual_calibration [-- marking_sigma_px]
//! ```

use autocalib::manual::{manual_calibration, GridOptions};
use autocalib::sim::{generate, NoiseSpec, SceneConfig};

fn main() -> anyhow::Result<()> {
    let sigma = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let noise = NoiseSpec {
        marking_sigma_px: sigma,
        ..NoiseSpec::default()
    };
    println!("seed  lines  D1  D2   dVP1px   dVP2px    df%     dλ%   grid");
    for seed in 0..5 {
        let bundle = generate(SceneConfig::sampled(seed, noise), seed)?;
        let m = &bundle.markings;
        let (calib, fit) = manual_calibration(m, bundle.config.image, &GridOptions::default())?;
        let t = &bundle.truth;
        println!(
            "{seed:4} {:6} {:3} {:3} {:8.2} {:8.2} {:6.2} {:7.2} {:6}",
            m.lane_lines.len() + m.perpendicular_lines.len(),
            m.d1.len(),
            m.d2.len(),
            calib.vp1.distance(t.vp1),
            calib.vp2.distance(t.vp2),
            (calib.focal / t.focal - 1.0) * 100.0,
            (calib.scale.unwrap_or(f64::NAN) / t.scale - 1.0) * 100.0,
            fit.candidates
        );
    }
    Ok(())
}
