//! Image-space 3D bounding boxes from a convex hull and three vanishing points.
//!
//! For every vanishing point the two lines through it that touch the hull
//! are found. Ordered around the hull by their contact points, the six lines
//! form the silhouette hexagon of a box whose edges point at the vanishing
//! points; opposite sides belong to the same vanishing point. Walking along
//! the hexagon flips one box coordinate per side, which labels the six
//! silhouette corners. The two remaining corners (one visible, one hidden)
//! are intersections of lines from their labeled neighbors toward the
//! vanishing points.
//!
//! Corners are indexed by `flow | across << 1 | up << 2`, one bit per axis
//! (first, second and third vanishing point). Bottom corners have `up = 0`;
//! which flow value is the front depends on the travel direction and is
//! resolved by [`reference_point`].

use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::error::{Error, Result};
use crate::geometry::{BBox, HomPoint, ImagePoint, Line2};
use crate::tracking::hull::{convex_contains, convex_hull, polygon_centroid};

const IDEAL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent {
    pub line: Line2,
    pub axis: usize,
    /// Mean of the hull vertices the line touches.
    pub contact: ImagePoint,
}

/// The two tangents from `vp` to a convex polygon.
pub fn tangents(hull: &[ImagePoint], vp: &HomPoint, axis: usize) -> Result<[Tangent; 2]> {
    let centroid = polygon_centroid(hull);
    let key: Vec<f64> = if vp.is_ideal(IDEAL_EPS) {
        let d = ImagePoint::new(vp.0.x, vp.0.y).normalized();
        hull.iter().map(|&p| d.cross(p - centroid)).collect()
    } else {
        let v = vp.to_finite().ok_or(Error::TangentFailure)?;
        if convex_contains(hull, v) {
            return Err(Error::TangentFailure);
        }
        let r = centroid - v;
        let dist = r.norm();
        if dist == 0.0 {
            return Err(Error::TangentFailure);
        }
        let r = r * (1.0 / dist);
        hull.iter()
            .map(|&p| {
                let q = p - centroid;
                r.cross(q).atan2(r.dot(q) + dist)
            })
            .collect()
    };
    let (lo, hi) = key
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &k| (a.min(k), b.max(k)));
    let scale = key.iter().fold(0.0f64, |m, k| m.max(k.abs())).max(1e-300);
    let tol = 1e-9 * scale;
    let mut out = Vec::with_capacity(2);
    for target in [lo, hi] {
        let touching: Vec<ImagePoint> = hull
            .iter()
            .zip(&key)
            .filter(|(_, &k)| (k - target).abs() <= tol)
            .map(|(&p, _)| p)
            .collect();
        let contact = touching.iter().fold(ImagePoint::ORIGIN, |s, &p| s + p) * (1.0 / touching.len() as f64);
        let line = Line2::join(&touching[0].homogeneous(), vp).map_err(|_| Error::TangentFailure)?;
        out.push(Tangent { line, axis, contact });
    }
    Ok([out[0], out[1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox3D {
    /// Indexed by `flow | across << 1 | up << 2`.
    pub corners: [ImagePoint; 8],
    /// Silhouette corners in cyclic order.
    pub hexagon: [ImagePoint; 6],
    /// Indices of the silhouette corners in `corners`.
    pub hexagon_labels: [u8; 6],
}

impl BoundingBox3D {
    pub fn corner(&self, flow: usize, across: usize, up: usize) -> ImagePoint {
        self.corners[flow | (across << 1) | (up << 2)]
    }

    pub fn base(&self) -> [ImagePoint; 4] {
        [self.corners[0], self.corners[1], self.corners[3], self.corners[2]]
    }

    /// Center of the base: intersection of its diagonals.
    pub fn base_center(&self) -> Result<ImagePoint> {
        let d1 = Line2::through(self.corners[0], self.corners[3])?;
        let d2 = Line2::through(self.corners[1], self.corners[2])?;
        d1.intersect(&d2).to_finite().ok_or(Error::DegenerateHull)
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_points(self.hexagon.iter().copied()).expect("hexagon has corners")
    }

    /// Flips the up bit of every label.
    fn flip_up(&mut self) {
        let mut c = [ImagePoint::ORIGIN; 8];
        for (i, p) in self.corners.iter().enumerate() {
            c[i ^ 4] = *p;
        }
        self.corners = c;
        for l in &mut self.hexagon_labels {
            *l ^= 4;
        }
    }
}

fn finite_intersection(a: &Line2, b: &Line2) -> Result<ImagePoint> {
    let p = a.intersect(b);
    if p.is_ideal(1e-12) {
        return Err(Error::DegenerateHull);
    }
    p.to_finite().ok_or(Error::DegenerateHull)
}

/// Box with labels whose bit polarity is arbitrary; `vps` are ordered
/// (flow, across, up).
pub fn construct_box_with_vps(hull_points: &[ImagePoint], vps: &[HomPoint; 3]) -> Result<BoundingBox3D> {
    let hull = convex_hull(hull_points);
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let centroid = polygon_centroid(&hull);
    let mut lines: Vec<Tangent> = Vec::with_capacity(6);
    for (axis, vp) in vps.iter().enumerate() {
        lines.extend(tangents(&hull, vp, axis)?);
    }
    // Supporting lines of a convex polygon go around it in the order of
    // their outward normals, even when two of them share a contact vertex.
    let angle = |t: &Tangent| {
        let s = if t.line.signed_distance(centroid) > 0.0 { -1.0 } else { 1.0 };
        (s * t.line.b).atan2(s * t.line.a)
    };
    lines.sort_by(|a, b| angle(a).total_cmp(&angle(b)).then(a.axis.cmp(&b.axis)));
    for k in 0..3 {
        if lines[k].axis != lines[k + 3].axis || lines[k].axis == lines[k + 1].axis {
            return Err(Error::TangentFailure);
        }
    }

    let mut hexagon = [ImagePoint::ORIGIN; 6];
    let mut labels = [0u8; 6];
    let mut label = 0u8;
    for k in 0..6 {
        hexagon[k] = finite_intersection(&lines[k].line, &lines[(k + 1) % 6].line)?;
        labels[k] = label;
        label ^= 1 << lines[(k + 1) % 6].axis;
    }

    let mut corners = [ImagePoint::ORIGIN; 8];
    let mut known = [false; 8];
    for k in 0..6 {
        corners[labels[k] as usize] = hexagon[k];
        known[labels[k] as usize] = true;
    }
    let mut bbox = BoundingBox3D {
        corners,
        hexagon,
        hexagon_labels: labels,
    };
    let missing: Vec<usize> = (0..8).filter(|&i| !known[i]).collect();
    if missing.len() != 2 {
        return Err(Error::TangentFailure);
    }
    for &m in &missing {
        bbox.corners[m] = interior_corner(&bbox.corners, m, vps, None)?;
    }
    Ok(bbox)
}

/// Corner `m` from its three neighbors; with `only_axes`, only those
/// directions are intersected.
fn interior_corner(corners: &[ImagePoint; 8], m: usize, vps: &[HomPoint; 3], only_axes: Option<[usize; 2]>) -> Result<ImagePoint> {
    let axes: Vec<usize> = match only_axes {
        Some(a) => a.to_vec(),
        None => vec![0, 1, 2],
    };
    let lines: Vec<(Line2, f64)> = axes
        .iter()
        .filter_map(|&a| Line2::join(&corners[m ^ (1 << a)].homogeneous(), &vps[a]).ok())
        .map(|l| (l, 1.0))
        .collect();
    if lines.len() == 2 {
        return finite_intersection(&lines[0].0, &lines[1].0);
    }
    crate::geometry::weighted_line_intersection(&lines).map_err(|_| Error::DegenerateHull)
}

/// Full 3D box for a calibrated camera, with bottom corners at `up = 0`.
/// A hidden bottom corner is intersected from its base neighbors only, so
/// the base is exactly consistent with the first two vanishing points.
pub fn construct_3d_bbox(hull: &[ImagePoint], calib: &CameraCalibration) -> Result<BoundingBox3D> {
    let vps = calib.vanishing_points();
    let mut b = construct_box_with_vps(hull, &vps)?;
    // Of two corners on a vertical edge, the top one meets the road farther away.
    let k = b.hexagon_labels.iter().position(|&l| b.hexagon_labels.contains(&(l ^ 4)));
    let bottom_is_zero = match k {
        Some(k) => {
            let l = b.hexagon_labels[k] as usize;
            let (p0, p1) = if l & 4 == 0 {
                (b.corners[l], b.corners[l ^ 4])
            } else {
                (b.corners[l ^ 4], b.corners[l])
            };
            let d0 = calib.project_to_road(p0).map(|g| g.norm()).unwrap_or(f64::INFINITY);
            let d1 = calib.project_to_road(p1).map(|g| g.norm()).unwrap_or(f64::INFINITY);
            d0 <= d1
        }
        None => return Err(Error::TangentFailure),
    };
    if !bottom_is_zero {
        b.flip_up();
    }
    for m in 0..4usize {
        if !b.hexagon_labels.contains(&(m as u8)) {
            b.corners[m] = interior_corner(&b.corners, m, &vps, Some([0, 1]))?;
        }
    }
    Ok(b)
}

/// Direction of travel relative to the first vanishing point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Travel {
    /// Moving toward the first vanishing point (receding).
    TowardVp1,
    /// Moving away from it (approaching the camera).
    AwayFromVp1,
}

/// The flow bit of the front base edge.
pub fn front_bit(b: &BoundingBox3D, calib: &CameraCalibration, travel: Travel) -> Result<usize> {
    let flow = calib.rotation()?.column(0).into_owned();
    let g = |i: usize| calib.project_to_road(b.corners[i]);
    let along0 = (g(0)? + g(2)?).dot(&flow);
    let along1 = (g(1)? + g(3)?).dot(&flow);
    let bit1_ahead = along1 > along0;
    Ok(match (travel, bit1_ahead) {
        (Travel::TowardVp1, true) | (Travel::AwayFromVp1, false) => 1,
        _ => 0,
    })
}

/// Midpoint of the bottom-front edge, taken on the road plane and projected
/// back into the image.
pub fn reference_point(b: &BoundingBox3D, calib: &CameraCalibration, travel: Travel) -> Result<ImagePoint> {
    let f = front_bit(b, calib, travel)?;
    let (p, q) = (b.corner(f, 0, 0), b.corner(f, 1, 0));
    let mid = (calib.project_to_road(p)? + calib.project_to_road(q)?) * 0.5;
    calib.image_of(&mid).ok_or(Error::BehindCamera)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_axis_aligned_ideal_vps() {
        let hull = [
            ImagePoint::new(0.0, 0.0),
            ImagePoint::new(10.0, 0.0),
            ImagePoint::new(10.0, 10.0),
            ImagePoint::new(0.0, 10.0),
        ];
        let vps = [HomPoint::ideal(1.0, 0.0), HomPoint::ideal(0.0, 1.0), HomPoint::ideal(1.0, 1.0)];
        let b = construct_box_with_vps(&hull, &vps).unwrap();
        let bb = b.bbox();
        assert!((bb.x0 - 0.0).abs() < 1e-9 && (bb.y0 - 0.0).abs() < 1e-9);
        assert!((bb.x1 - 10.0).abs() < 1e-9 && (bb.y1 - 10.0).abs() < 1e-9);
        for p in b.hexagon {
            assert!(hull.iter().any(|q| q.distance(p) < 1e-9), "{p:?}");
        }
    }

    #[test]
    fn vp_inside_hull_fails() {
        let hull = [
            ImagePoint::new(0.0, 0.0),
            ImagePoint::new(10.0, 0.0),
            ImagePoint::new(10.0, 10.0),
            ImagePoint::new(0.0, 10.0),
        ];
        let vps = [
            ImagePoint::new(5.0, 5.0).homogeneous(),
            HomPoint::ideal(0.0, 1.0),
            HomPoint::ideal(1.0, 1.0),
        ];
        assert!(matches!(construct_box_with_vps(&hull, &vps), Err(Error::TangentFailure)));
    }

    #[test]
    fn collinear_hull_is_degenerate() {
        let hull = [ImagePoint::new(0.0, 0.0), ImagePoint::new(1.0, 1.0), ImagePoint::new(2.0, 2.0)];
        let vps = [HomPoint::ideal(1.0, 0.0), HomPoint::ideal(0.0, 1.0), HomPoint::ideal(1.0, 1.0)];
        assert!(matches!(construct_box_with_vps(&hull, &vps), Err(Error::DegenerateHull)));
    }
}
