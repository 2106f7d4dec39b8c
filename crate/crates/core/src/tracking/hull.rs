//! Convex hulls of image point sets.

use crate::geometry::ImagePoint;

/// Convex hull by Andrew's monotone chain, counter-clockwise in a y-up
/// sense (clockwise on screen), without collinear points.
pub fn convex_hull(points: &[ImagePoint]) -> Vec<ImagePoint> {
    let mut pts: Vec<ImagePoint> = points.iter().copied().filter(|p| p.is_finite()).collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: ImagePoint, a: ImagePoint, b: ImagePoint| (a - o).cross(b - o);
    let mut lower: Vec<ImagePoint> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<ImagePoint> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Twice the signed area of a polygon.
pub fn signed_area2(poly: &[ImagePoint]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum()
}

pub fn polygon_area(poly: &[ImagePoint]) -> f64 {
    0.5 * signed_area2(poly).abs()
}

/// Area centroid of a simple polygon; vertex mean when the area vanishes.
pub fn polygon_centroid(poly: &[ImagePoint]) -> ImagePoint {
    let n = poly.len();
    let a2 = signed_area2(poly);
    if a2.abs() < 1e-12 {
        return poly.iter().fold(ImagePoint::ORIGIN, |s, &p| s + p) * (1.0 / n as f64);
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let c = p.cross(q);
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    ImagePoint::new(cx / (3.0 * a2), cy / (3.0 * a2))
}

/// Whether `p` lies strictly inside a convex polygon (either orientation).
pub fn convex_contains(poly: &[ImagePoint], p: ImagePoint) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0;
    for i in 0..n {
        let c = (poly[(i + 1) % n] - poly[i]).cross(p - poly[i]);
        if c == 0.0 {
            return false;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_interior_and_collinear_points() {
        let pts = [
            ImagePoint::new(0.0, 0.0),
            ImagePoint::new(10.0, 0.0),
            ImagePoint::new(5.0, 0.0),
            ImagePoint::new(10.0, 10.0),
            ImagePoint::new(0.0, 10.0),
            ImagePoint::new(4.0, 6.0),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert_eq!(polygon_area(&h), 100.0);
        assert_eq!(polygon_centroid(&h), ImagePoint::new(5.0, 5.0));
        assert!(convex_contains(&h, ImagePoint::new(1.0, 9.0)));
        assert!(!convex_contains(&h, ImagePoint::new(11.0, 9.0)));
    }
}
