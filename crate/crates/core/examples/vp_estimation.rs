//! Both vanishing points of a simulated scene: the first from vehicle
//! trajectories, the second from edgelets.
//!
//! ```text
//! cargo run --release --example vp_estimation [-- seed]
//! ```

use autocalib::camera::CameraCalibration;
use autocalib::edgelets::EdgeletOptions;
use autocalib::pipeline::{scene_edgelets, SceneData, SEGMENT_CHUNK};
use autocalib::sim::{generate, NoiseSpec, SceneConfig};
use autocalib::vp::{estimate_first_vp, estimate_second_vp, segments_from_points, VpOptions};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let bundle = generate(SceneConfig::sampled(seed, NoiseSpec::default()), seed)?;
    let data = SceneData::from_bundle(&bundle);
    let opts = VpOptions::default();

    let segments = segments_from_points(&data.trajectories, SEGMENT_CHUNK);
    let vp1 = estimate_first_vp(&segments, data.image_size, &opts)?;
    println!("{} trajectory segments", segments.len());
    println!(
        "VP1 {:.1?} truth {:.1?} score ratio {:.1}",
        vp1.point,
        bundle.truth.vp1,
        vp1.score_ratio()
    );

    let edgelets = scene_edgelets(&data.edgelets, vp1.point, &EdgeletOptions::default())?;
    let vp2 = estimate_second_vp(&edgelets, vp1.point, data.image_size, &opts)?;
    println!("{} edgelets", edgelets.len());
    println!(
        "VP2 {:.1?} truth {:.1?} score ratio {:.1}",
        vp2.point,
        bundle.truth.vp2,
        vp2.score_ratio()
    );

    let calib = CameraCalibration::from_vps(vp1.point, vp2.point, data.image_size)?;
    println!("focal {:.1} px, truth {:.1} px", calib.focal, bundle.truth.focal);
    Ok(())
}
