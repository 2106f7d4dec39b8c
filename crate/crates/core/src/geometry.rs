//! Planar primitives shared by every stage.
//!
//! All image quantities inside the crate live in a frame whose origin is the
//! image center (the principal point), x to the right and y down. Files on
//! disk use the conventional top-left pixel origin; the translation between
//! the two happens once, when a file is read or written.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    /// Principal point in top-left pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Half of the larger image dimension.
    pub fn half_extent(&self) -> f64 {
        self.width.max(self.height) as f64 / 2.0
    }

    /// Whether a centered point lies inside the image with `margin` pixels to spare.
    pub fn contains(&self, p: ImagePoint, margin: f64) -> bool {
        let (cx, cy) = self.center();
        let (x, y) = (p.x + cx, p.y + cy);
        x >= margin && y >= margin && x <= self.width as f64 - 1.0 - margin && y <= self.height as f64 - 1.0 - margin
    }
}

/// A finite image point in centered pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImagePoint {
    pub x: f64,
    pub y: f64,
}

impl ImagePoint {
    pub const ORIGIN: ImagePoint = ImagePoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_top_left(x: f64, y: f64, size: ImageSize) -> Self {
        let (cx, cy) = size.center();
        Self::new(x - cx, y - cy)
    }

    pub fn to_top_left(self, size: ImageSize) -> [f64; 2] {
        let (cx, cy) = size.center();
        [self.x + cx, self.y + cy]
    }

    pub fn dot(self, o: ImagePoint) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: ImagePoint) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: ImagePoint) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> ImagePoint {
        let n = self.norm();
        ImagePoint::new(self.x / n, self.y / n)
    }

    pub fn midpoint(self, o: ImagePoint) -> ImagePoint {
        ImagePoint::new(0.5 * (self.x + o.x), 0.5 * (self.y + o.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn homogeneous(self) -> HomPoint {
        HomPoint(Vector3::new(self.x, self.y, 1.0))
    }

    /// Lift onto the image plane at depth `f`.
    pub fn lift(self, f: f64) -> Vector3<f64> {
        Vector3::new(self.x, self.y, f)
    }
}

impl Add for ImagePoint {
    type Output = ImagePoint;
    fn add(self, o: ImagePoint) -> ImagePoint {
        ImagePoint::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for ImagePoint {
    type Output = ImagePoint;
    fn sub(self, o: ImagePoint) -> ImagePoint {
        ImagePoint::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for ImagePoint {
    type Output = ImagePoint;
    fn mul(self, s: f64) -> ImagePoint {
        ImagePoint::new(self.x * s, self.y * s)
    }
}

impl Neg for ImagePoint {
    type Output = ImagePoint;
    fn neg(self) -> ImagePoint {
        ImagePoint::new(-self.x, -self.y)
    }
}

/// A point of the projective plane; `w == 0` encodes a direction (ideal point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomPoint(pub Vector3<f64>);

impl HomPoint {
    pub fn new(x: f64, y: f64, w: f64) -> Self {
        HomPoint(Vector3::new(x, y, w))
    }

    pub fn ideal(dx: f64, dy: f64) -> Self {
        HomPoint(Vector3::new(dx, dy, 0.0))
    }

    /// True when the point is at infinity relative to its own magnitude.
    pub fn is_ideal(&self, rel_eps: f64) -> bool {
        let v = &self.0;
        v.z.abs() <= rel_eps * v.x.abs().max(v.y.abs())
    }

    pub fn to_finite(&self) -> Option<ImagePoint> {
        let v = &self.0;
        if v.z == 0.0 {
            return None;
        }
        let p = ImagePoint::new(v.x / v.z, v.y / v.z);
        p.is_finite().then_some(p)
    }

    /// Direction of the point as seen from `from`, valid for finite and ideal points.
    pub fn direction_from(&self, from: ImagePoint) -> ImagePoint {
        let v = &self.0;
        // (x - w*fx, y - w*fy) carries the sign of w, so flip to keep "toward".
        let d = ImagePoint::new(v.x - v.z * from.x, v.y - v.z * from.y);
        if v.z < 0.0 {
            -d
        } else {
            d
        }
    }
}

impl From<ImagePoint> for HomPoint {
    fn from(p: ImagePoint) -> Self {
        p.homogeneous()
    }
}

/// An image line `a x + b y + c = 0` with `a² + b² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Line2 {
    /// Normalizes arbitrary line coefficients; fails for the all-zero line.
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let n = a.hypot(b);
        if !(n > 1e-300) || !c.is_finite() {
            return Err(Error::InvalidInput("degenerate line coefficients".into()));
        }
        Ok(Self {
            a: a / n,
            b: b / n,
            c: c / n,
        })
    }

    pub fn through(p: ImagePoint, q: ImagePoint) -> Result<Self> {
        let d = q - p;
        Self::new(-d.y, d.x, d.y * p.x - d.x * p.y)
    }

    pub fn from_point_dir(p: ImagePoint, d: ImagePoint) -> Result<Self> {
        Self::new(-d.y, d.x, d.y * p.x - d.x * p.y)
    }

    /// Line joining two projective points (finite or ideal).
    pub fn join(p: &HomPoint, q: &HomPoint) -> Result<Self> {
        let l = p.0.cross(&q.0);
        Self::new(l.x, l.y, l.z)
    }

    pub fn coeffs(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }

    /// Signed distance of `p` to the line.
    pub fn signed_distance(&self, p: ImagePoint) -> f64 {
        self.a * p.x + self.b * p.y + self.c
    }

    pub fn distance(&self, p: ImagePoint) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Unit direction along the line.
    pub fn direction(&self) -> ImagePoint {
        ImagePoint::new(self.b, -self.a)
    }

    pub fn intersect(&self, o: &Line2) -> HomPoint {
        HomPoint(self.coeffs().cross(&o.coeffs()))
    }

    /// Incidence residual of a projective point, scaled to be comparable
    /// between finite points (pixel distance) and ideal points (sine of angle).
    pub fn incidence(&self, p: &HomPoint) -> f64 {
        let v = &p.0;
        if v.z != 0.0 {
            self.coeffs().dot(v) / v.z
        } else {
            (self.a * v.x + self.b * v.y) / v.x.hypot(v.y)
        }
    }
}

/// Axis-aligned rectangle in centered image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x0: x0.min(x1),
            y0: y0.min(y1),
            x1: x0.max(x1),
            y1: y0.max(y1),
        }
    }

    /// Top-left origin `[x, y, w, h]` box converted to centered coordinates.
    pub fn from_xywh_top_left(r: [f64; 4], size: ImageSize) -> Self {
        let p = ImagePoint::from_top_left(r[0], r[1], size);
        Self::new(p.x, p.y, p.x + r[2], p.y + r[3])
    }

    pub fn to_xywh_top_left(&self, size: ImageSize) -> [f64; 4] {
        let [x, y] = ImagePoint::new(self.x0, self.y0).to_top_left(size);
        [x, y, self.width(), self.height()]
    }

    pub fn from_points<I: IntoIterator<Item = ImagePoint>>(pts: I) -> Option<Self> {
        let mut it = pts.into_iter();
        let first = it.next()?;
        let mut b = BBox::new(first.x, first.y, first.x, first.y);
        for p in it {
            b.x0 = b.x0.min(p.x);
            b.y0 = b.y0.min(p.y);
            b.x1 = b.x1.max(p.x);
            b.y1 = b.y1.max(p.y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> ImagePoint {
        ImagePoint::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn intersection_area(&self, o: &BBox) -> f64 {
        let w = self.x1.min(o.x1) - self.x0.max(o.x0);
        let h = self.y1.min(o.y1) - self.y0.max(o.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn contains_point(&self, p: ImagePoint, tol: f64) -> bool {
        p.x >= self.x0 - tol && p.x <= self.x1 + tol && p.y >= self.y0 - tol && p.y <= self.y1 + tol
    }

    pub fn dilated(&self, by: f64) -> BBox {
        BBox::new(self.x0 - by, self.y0 - by, self.x1 + by, self.y1 + by)
    }

    pub fn translated(&self, d: ImagePoint) -> BBox {
        BBox::new(self.x0 + d.x, self.y0 + d.y, self.x1 + d.x, self.y1 + d.y)
    }
}

/// Least-squares intersection of weighted lines: minimizes `Σ wᵢ (aᵢ x + bᵢ y + cᵢ)²`.
pub fn weighted_line_intersection(lines: &[(Line2, f64)]) -> Result<ImagePoint> {
    let (mut saa, mut sab, mut sbb, mut sac, mut sbc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut wsum = 0.0;
    for (l, w) in lines {
        saa += w * l.a * l.a;
        sab += w * l.a * l.b;
        sbb += w * l.b * l.b;
        sac += w * l.a * l.c;
        sbc += w * l.b * l.c;
        wsum += w;
    }
    let det = saa * sbb - sab * sab;
    // Rank test relative to the total weight (each normal has unit length).
    if lines.len() < 2 || !(det > 1e-12 * wsum * wsum) {
        return Err(Error::ParallelLines);
    }
    let x = (-sac * sbb + sbc * sab) / det;
    let y = (-sbc * saa + sac * sab) / det;
    Ok(ImagePoint::new(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_left_translation_round_trips() {
        let size = ImageSize::new(1920, 1080);
        let p = ImagePoint::from_top_left(10.0, 20.0, size);
        assert_eq!(p, ImagePoint::new(-950.0, -520.0));
        assert_eq!(p.to_top_left(size), [10.0, 20.0]);
    }

    #[test]
    fn line_through_points_is_normalized() {
        let l = Line2::through(ImagePoint::new(0.0, 0.0), ImagePoint::new(3.0, 4.0)).unwrap();
        assert!((l.a * l.a + l.b * l.b - 1.0).abs() < 1e-12);
        assert!(l.distance(ImagePoint::new(6.0, 8.0)) < 1e-12);
        assert!((l.distance(ImagePoint::new(4.0, -3.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_line_rejected() {
        assert!(Line2::new(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn two_lines_least_squares_is_exact() {
        let p = ImagePoint::new(100.0, 50.0);
        let l1 = Line2::from_point_dir(p, ImagePoint::new(1.0, 0.3)).unwrap();
        let l2 = Line2::from_point_dir(p, ImagePoint::new(-0.2, 1.0)).unwrap();
        let x = weighted_line_intersection(&[(l1, 1.0), (l2, 1.0)]).unwrap();
        assert!(x.distance(p) < 1e-9);
    }

    #[test]
    fn parallel_lines_fail() {
        let l1 = Line2::new(0.0, 1.0, 0.0).unwrap();
        let l2 = Line2::new(0.0, 1.0, 5.0).unwrap();
        assert!(matches!(
            weighted_line_intersection(&[(l1, 1.0), (l2, 1.0)]),
            Err(Error::ParallelLines)
        ));
    }

    #[test]
    fn direction_toward_ideal_and_finite_points() {
        let from = ImagePoint::new(1.0, 1.0);
        let d = HomPoint::new(-4.0, -2.0, -1.0).direction_from(from);
        // The point is (4, 2); direction (3, 1).
        assert!((d.normalized().cross(ImagePoint::new(3.0, 1.0).normalized())).abs() < 1e-12);
        assert!(d.dot(ImagePoint::new(3.0, 1.0)) > 0.0);
    }

    #[test]
    fn bbox_intersection() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(5.0, 0.0, 15.0, 10.0);
        assert_eq!(a.intersection_area(&b), 50.0);
        assert_eq!(a.intersection_area(&BBox::new(20.0, 20.0, 30.0, 30.0)), 0.0);
    }
}
