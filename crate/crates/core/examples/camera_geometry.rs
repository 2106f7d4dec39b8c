//! Calibration from two vanishing points: focal length, rotation, road
//! projection and metric distances.
//!
//! ```text
//! cargo run --example camera_geometry
//! ```

use autocalib::camera::CameraCalibration;
use autocalib::geometry::{ImagePoint, ImageSize};

fn main() -> anyhow::Result<()> {
    let size = ImageSize::new(1920, 1080);
    // Centered pixel coordinates, y down.
    let vp1 = ImagePoint::new(-310.0, -1480.0);
    let vp2 = ImagePoint::new(4350.0, -640.0);
    let calib = CameraCalibration::from_vps(vp1, vp2, size)?.with_scale(11.5);

    println!("focal       {:.1} px", calib.focal);
    println!("vp3         {:?}", calib.vp3().to_finite());
    println!("horizon     {:?}", calib.horizon()?);
    println!("road normal {:.4}", calib.plane.normal().transpose());
    println!("rotation    {:.4}", calib.rotation()?);

    let a = ImagePoint::new(-120.0, 380.0);
    let b = ImagePoint::new(-60.0, 150.0);
    let (pa, pb) = (calib.project_to_road(a)?, calib.project_to_road(b)?);
    println!("road points {:.3} / {:.3}", pa.transpose(), pb.transpose());
    println!("distance    {:.2} m", calib.ground_distance(a, b)?);
    // Projecting back lands on the original pixel.
    println!("round trip  {:?}", calib.image_of(&pa));
    Ok(())
}
