//! Generates a synthetic traffic scene and writes it as a bundle directory.
//!
//! ```text
//! cargo run --release --example simulate_scene -- <out_dir> [seed]
//! ```

use std::path::PathBuf;

use autocalib::io::write_scene_bundle;
use autocalib::sim::{generate, NoiseSpec, SceneConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(
        args.next()
            .ok_or_else(|| anyhow::anyhow!("usage: simulate_scene <out_dir> [seed]"))?,
    );
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let noise = NoiseSpec {
        trajectory_sigma_px: 0.5,
        edge_outlier_fraction: 0.2,
        detection_jitter_px: 2.0,
        marking_sigma_px: 1.0,
    };
    let config = SceneConfig::sampled(seed, noise);
    let c = &config.camera;
    println!(
        "camera: f {:.0} px, tilt {:.1}°, pan {:.1}°, roll {:.1}°, height {:.2} m",
        c.focal_px, c.tilt_deg, c.pan_deg, c.roll_deg, c.height_m
    );
    let bundle = generate(config, seed)?;
    println!(
        "{} vehicles, {} passes, {} trajectory points, {} detections, {} rendered frames",
        bundle.config.vehicles.len(),
        bundle.truth.passes.len(),
        bundle.trajectories.len(),
        bundle.detections.len(),
        bundle.rendered_frames.len()
    );
    write_scene_bundle(&bundle, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
