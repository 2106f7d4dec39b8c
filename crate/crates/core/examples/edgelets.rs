//! Oriented edge samples from one rendered frame of a simulated scene.
//!
//! ```text
//! cargo run --release --example edgelets [-- seed]
//! ```

use autocalib::edgelets::{angle_to_point_deg, frame_edgelets, select_strongest, EdgeletOptions};
use autocalib::sim::{generate, NoiseSpec, SceneConfig};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2);
    let bundle = generate(SceneConfig::sampled(seed, NoiseSpec::default()), seed)?;
    let frame = bundle.rendered_frames[bundle.rendered_frames.len() / 2];
    let img = bundle.render_frame(frame);

    let opts = EdgeletOptions::default();
    let all = frame_edgelets(&img, opts.seed_threshold_rel);
    let strong = select_strongest(all.clone(), opts.keep_fraction);
    println!("frame {frame}: {} edgelets, {} kept", all.len(), strong.len());

    // Road edges and lane lines point at the first VP; crosswise edges at the second.
    let (vp1, vp2) = (bundle.truth.vp1, bundle.truth.vp2);
    let near = |vp, e| angle_to_point_deg(e, vp) < 2.0;
    println!(
        "toward VP1 {}, toward VP2 {}",
        all.iter().filter(|e| near(vp1, e)).count(),
        all.iter().filter(|e| near(vp2, e)).count()
    );
    for e in strong.iter().take(5) {
        println!(
            "  seed {:7.1?} dir {:5.2?} quality {:6.2}",
            (e.seed.x, e.seed.y),
            (e.direction.x, e.direction.y),
            e.quality
        );
    }
    Ok(())
}
