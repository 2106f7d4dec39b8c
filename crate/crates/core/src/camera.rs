//! Traffic camera model built from two orthogonal vanishing points.
//!
//! With zero skew and the principal point at the image center, the first
//! vanishing point `u` (traffic flow) and the second `v` (perpendicular,
//! parallel to the road) fix the focal length, the camera rotation relative
//! to the road and the road plane up to its distance. The plane is stored as
//! `nᵀP + δ = 0` with `δ = 1`, so ground coordinates come out in pseudo-units
//! and the scene scale `λ` converts them to meters.
//!
//! Conventions pinned here:
//! - the focal length uses only the x/y components of `u` and `v`;
//! - `n` is oriented so that the lower half of the image looks at the road,
//!   i.e. `n_y < 0` in the y-down camera frame, which also makes `n` point
//!   from the road toward the camera;
//! - the rotation has columns (u-direction, v-direction orthogonalized,
//!   their cross product) and therefore always `det = +1`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{HomPoint, ImagePoint, ImageSize, Line2};

/// Constant term of the road plane.
pub const PLANE_DELTA: f64 = 1.0;

const HORIZON_EPS: f64 = 1e-9;

/// Point on the road plane, in camera coordinates and pseudo-units.
pub type GroundPoint = Vector3<f64>;

/// Road plane `nᵀP + 1 = 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadPlane {
    normal: Vector3<f64>,
}

impl RoadPlane {
    pub fn from_normal(n: Vector3<f64>) -> Result<Self> {
        let len = n.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::DegenerateVps);
        }
        Ok(Self { normal: n / len })
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    pub fn delta(&self) -> f64 {
        PLANE_DELTA
    }

    /// The homogeneous plane vector `ρ = [nᵀ, δ]ᵀ`.
    pub fn rho(&self) -> [f64; 4] {
        [self.normal.x, self.normal.y, self.normal.z, PLANE_DELTA]
    }

    pub fn residual(&self, p: &GroundPoint) -> f64 {
        self.normal.dot(p) + PLANE_DELTA
    }
}

/// Focal length implied by two orthogonal vanishing points.
pub fn focal_from_vps(u: ImagePoint, v: ImagePoint) -> Result<f64> {
    let radicand = -(u.x * v.x + u.y * v.y);
    if !(radicand > 0.0) || !radicand.is_finite() {
        return Err(Error::NonPositiveRadicand { radicand });
    }
    Ok(radicand.sqrt())
}

/// `φ = −Rᵀ b̄`, normalized.
pub fn viewpoint_from_rotation(r: &Matrix3<f64>, lifted: &Vector3<f64>) -> Vector3<f64> {
    (-(r.transpose() * lifted)).normalize()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraCalibration {
    pub vp1: ImagePoint,
    pub vp2: ImagePoint,
    pub focal: f64,
    pub plane: RoadPlane,
    /// Meters per road-plane pseudo-unit.
    pub scale: Option<f64>,
    pub image_size: ImageSize,
}

impl CameraCalibration {
    pub fn from_vps(u: ImagePoint, v: ImagePoint, image_size: ImageSize) -> Result<Self> {
        if !u.is_finite() || !v.is_finite() || u.distance(v) < 1e-6 {
            return Err(Error::DegenerateVps);
        }
        let focal = focal_from_vps(u, v)?;
        let w = u.lift(focal).cross(&v.lift(focal));
        let mut n = w.normalize();
        if n.y > 0.0 || (n.y == 0.0 && n.z > 0.0) {
            n = -n;
        }
        Ok(Self {
            vp1: u,
            vp2: v,
            focal,
            plane: RoadPlane::from_normal(n)?,
            scale: None,
            image_size,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = Some(scale);
        self
    }

    pub fn without_scale(mut self) -> Self {
        self.scale = None;
        self
    }

    pub fn lift(&self, p: ImagePoint) -> Vector3<f64> {
        p.lift(self.focal)
    }

    /// Third vanishing point (road normal direction) as a projective point.
    pub fn vp3(&self) -> HomPoint {
        let n = self.plane.normal();
        // Image of direction n: (f n_x / n_z, f n_y / n_z), kept homogeneous.
        HomPoint::new(self.focal * n.x, self.focal * n.y, n.z)
    }

    /// The three vanishing points in order (flow, perpendicular, vertical).
    pub fn vanishing_points(&self) -> [HomPoint; 3] {
        [self.vp1.homogeneous(), self.vp2.homogeneous(), self.vp3()]
    }

    pub fn horizon(&self) -> Result<Line2> {
        Line2::through(self.vp1, self.vp2)
    }

    /// Intersection of the viewing ray through `p` with the road plane.
    pub fn project_to_road(&self, p: ImagePoint) -> Result<GroundPoint> {
        let pb = self.lift(p);
        let denom = self.plane.normal().dot(&pb);
        // Rays at or above the horizon never reach the road in front of the camera.
        if !(denom < -HORIZON_EPS * pb.norm()) {
            return Err(Error::HorizonPoint { x: p.x, y: p.y });
        }
        Ok(pb * (-PLANE_DELTA / denom))
    }

    /// Forward projection of a camera-frame point.
    pub fn image_of(&self, p: &Vector3<f64>) -> Option<ImagePoint> {
        if !(p.z > 0.0) {
            return None;
        }
        Some(ImagePoint::new(self.focal * p.x / p.z, self.focal * p.y / p.z))
    }

    /// Distance between two image points measured on the road, in pseudo-units.
    pub fn pseudo_distance(&self, p1: ImagePoint, p2: ImagePoint) -> Result<f64> {
        Ok((self.project_to_road(p1)? - self.project_to_road(p2)?).norm())
    }

    /// Distance between two image points measured on the road, in meters.
    pub fn ground_distance(&self, p1: ImagePoint, p2: ImagePoint) -> Result<f64> {
        let scale = self.scale.ok_or(Error::MissingScale)?;
        Ok(scale * self.pseudo_distance(p1, p2)?)
    }

    /// Camera-to-road rotation with columns (u-dir, v-dir, u × v).
    pub fn rotation(&self) -> Result<Matrix3<f64>> {
        let ub = self.lift(self.vp1);
        let vb = self.lift(self.vp2);
        let c1 = ub.normalize();
        let v_perp = vb - c1 * c1.dot(&vb);
        let len = v_perp.norm();
        if !(len > 1e-12 * vb.norm()) {
            return Err(Error::DegenerateVps);
        }
        let c2 = v_perp / len;
        let c3 = c1.cross(&c2);
        Ok(Matrix3::from_columns(&[c1, c2, c3]))
    }

    /// Unit vector from a vehicle whose base center images at `b` toward the camera,
    /// expressed in the road-aligned frame of [`Self::rotation`].
    pub fn viewpoint_vector(&self, b: ImagePoint) -> Result<Vector3<f64>> {
        Ok(viewpoint_from_rotation(&self.rotation()?, &self.lift(b)))
    }

    /// Road-aligned unit axes in camera coordinates: flow, perpendicular, up.
    pub fn road_axes(&self) -> Result<[Vector3<f64>; 3]> {
        let r = self.rotation()?;
        let flow = r.column(0).into_owned();
        let up = self.plane.normal();
        let across = up.cross(&flow);
        Ok([flow, across, up])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn size() -> ImageSize {
        ImageSize::new(1920, 1080)
    }

    #[test]
    fn focal_examples() {
        assert_eq!(
            focal_from_vps(ImagePoint::new(100.0, 0.0), ImagePoint::new(-4.0, 0.0)).unwrap(),
            20.0
        );
        assert_eq!(
            focal_from_vps(ImagePoint::new(0.0, 50.0), ImagePoint::new(0.0, -2.0)).unwrap(),
            10.0
        );
        assert!(matches!(
            focal_from_vps(ImagePoint::new(10.0, 0.0), ImagePoint::new(5.0, 0.0)),
            Err(Error::NonPositiveRadicand { .. })
        ));
    }

    #[test]
    fn horizon_on_x_axis_gives_vertical_normal() {
        let c = CameraCalibration::from_vps(ImagePoint::new(100.0, 0.0), ImagePoint::new(-4.0, 0.0), size()).unwrap();
        let n = c.plane.normal();
        assert!((n - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        // The bottom image center looks at the road.
        let p = c.project_to_road(ImagePoint::new(0.0, 500.0)).unwrap();
        assert!(p.z > 0.0);
    }

    #[test]
    fn coincident_vps_rejected() {
        let p = ImagePoint::new(100.0, -20.0);
        assert!(matches!(CameraCalibration::from_vps(p, p, size()), Err(Error::DegenerateVps)));
    }

    #[test]
    fn normal_is_orthogonal_to_lifted_vps() {
        let c = CameraCalibration::from_vps(ImagePoint::new(450.0, -380.0), ImagePoint::new(-3200.0, -410.0), size()).unwrap();
        let n = c.plane.normal();
        assert!(n.dot(&c.lift(c.vp1)).abs() < 1e-9 * c.lift(c.vp1).norm());
        assert!(n.dot(&c.lift(c.vp2)).abs() < 1e-9 * c.lift(c.vp2).norm());
    }

    #[test]
    fn horizon_point_rejected() {
        let c = CameraCalibration::from_vps(ImagePoint::new(450.0, -380.0), ImagePoint::new(-3200.0, -410.0), size()).unwrap();
        let on_horizon = c.vp1 * 0.5 + c.vp2 * 0.5;
        assert!(matches!(c.project_to_road(on_horizon), Err(Error::HorizonPoint { .. })));
        assert!(c.project_to_road(ImagePoint::new(0.0, -600.0)).is_err());
    }

    #[test]
    fn viewpoint_at_principal_point_with_axis_aligned_rotation() {
        let phi = viewpoint_from_rotation(&Matrix3::identity(), &Vector3::new(0.0, 0.0, 1500.0));
        assert!((phi - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn viewpoint_is_unit_and_rotation_is_proper() {
        let c = CameraCalibration::from_vps(ImagePoint::new(450.0, -380.0), ImagePoint::new(-3200.0, -410.0), size()).unwrap();
        let r = c.rotation().unwrap();
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        let phi = c.viewpoint_vector(ImagePoint::new(30.0, 200.0)).unwrap();
        assert!((phi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_scale_is_reported() {
        let c = CameraCalibration::from_vps(ImagePoint::new(450.0, -380.0), ImagePoint::new(-3200.0, -410.0), size()).unwrap();
        assert!(matches!(
            c.ground_distance(ImagePoint::new(0.0, 100.0), ImagePoint::new(0.0, 200.0)),
            Err(Error::MissingScale)
        ));
    }
}
