//! Anti-aliased drawing on a flat background: shaded convex faces with
//! blurred step boundaries, and thin lines.

use crate::geometry::{ImagePoint, ImageSize};
use crate::raster::RasterImage;

pub const BACKGROUND: f32 = 0.25;
pub const INK: f32 = 1.0;
/// Standard deviation of the line's cross profile, pixels.
pub const LINE_SIGMA: f64 = 1.6;
/// Blur of face boundaries, pixels.
pub const EDGE_SIGMA: f64 = 1.0;

/// A convex quadrilateral in centered image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub corners: [ImagePoint; 4],
    pub shade: f32,
    /// Edge `i` (from corner `i` to `i + 1`) is shared with a face drawn
    /// later; it is pushed outward so the later face's ramp lands on this
    /// face instead of on whatever lies underneath.
    pub extend: [bool; 4],
}

/// Clips the segment `a → b` to `[x0, x1] × [y0, y1]` (Liang–Barsky).
fn clip(a: ImagePoint, b: ImagePoint, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<(ImagePoint, ImagePoint)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for (p, q) in [(-d.x, a.x - x0), (d.x, x1 - a.x), (-d.y, a.y - y0), (d.y, y1 - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
            continue;
        }
        let r = q / p;
        if p < 0.0 {
            t0 = t0.max(r);
        } else {
            t1 = t1.min(r);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((a + d * t0, a + d * t1))
}

fn segment_distance(p: ImagePoint, a: ImagePoint, b: ImagePoint) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    let t = if len2 > 0.0 { ((p - a).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.distance(a + d * t)
}

/// Row-major canvas in top-left pixel coordinates.
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<f32>,
}

impl Canvas {
    pub fn new(size: ImageSize) -> Self {
        let (width, height) = (size.width as usize, size.height as usize);
        Self {
            width,
            height,
            samples: vec![BACKGROUND; width * height],
        }
    }

    /// Draws a segment given in centered image coordinates.
    pub fn line(&mut self, a: ImagePoint, b: ImagePoint) {
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        let a = ImagePoint::new(a.x + cx, a.y + cy);
        let b = ImagePoint::new(b.x + cx, b.y + cy);
        let reach = 3.0 * LINE_SIGMA;
        let (w, h) = (self.width as f64, self.height as f64);
        let Some((a, b)) = clip(a, b, -reach, -reach, w - 1.0 + reach, h - 1.0 + reach) else {
            return;
        };
        let d = b - a;
        let band = (reach * std::f64::consts::SQRT_2).ceil() as i64 + 1;
        let steep = d.y.abs() > d.x.abs();
        let (lo, hi) = if steep {
            (a.y.min(b.y), a.y.max(b.y))
        } else {
            (a.x.min(b.x), a.x.max(b.x))
        };
        let limit = if steep { self.height } else { self.width } as i64;
        let (m0, m1) = (((lo - reach).floor() as i64).max(0), ((hi + reach).ceil() as i64).min(limit - 1));
        let inv = -0.5 / (LINE_SIGMA * LINE_SIGMA);
        for m in m0..=m1 {
            let t = if steep {
                if d.y != 0.0 {
                    ((m as f64 - a.y) / d.y).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            } else if d.x != 0.0 {
                ((m as f64 - a.x) / d.x).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let c = if steep { a.x + d.x * t } else { a.y + d.y * t };
            let other_limit = if steep { self.width } else { self.height } as i64;
            let (o0, o1) = ((c.round() as i64 - band).max(0), (c.round() as i64 + band).min(other_limit - 1));
            for o in o0..=o1 {
                let (px, py) = if steep { (o, m) } else { (m, o) };
                let dist = segment_distance(ImagePoint::new(px as f64, py as f64), a, b);
                if dist > reach {
                    continue;
                }
                let v = BACKGROUND + (INK - BACKGROUND) * (inv * dist * dist).exp() as f32;
                let idx = py as usize * self.width + px as usize;
                if v > self.samples[idx] {
                    self.samples[idx] = v;
                }
            }
        }
    }

    /// Composites a face over the canvas. Coverage is the product of blurred
    /// half-plane steps, exact along edges away from the corners.
    pub fn fill(&mut self, face: &Face) {
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        let c = face.corners.map(|p| ImagePoint::new(p.x + cx, p.y + cy));
        let area2: f64 = (0..4).map(|i| c[i].cross(c[(i + 1) % 4])).sum();
        if !(area2.abs() > 1e-9) {
            return;
        }
        let orient = area2.signum();
        let push = 3.0 * EDGE_SIGMA;
        // Inward unit normal and offset per edge: d(p) = n·p − k, positive inside.
        let edges: Vec<(ImagePoint, f64)> = (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                let d = (b - a).normalized();
                let n = ImagePoint::new(-d.y, d.x) * orient;
                let k = n.dot(a) - if face.extend[i] { push } else { 0.0 };
                (n, k)
            })
            .collect();
        let reach = push + 4.0 * EDGE_SIGMA;
        let xs = c.iter().map(|p| p.x);
        let ys = c.iter().map(|p| p.y);
        let x0 = (xs.clone().fold(f64::INFINITY, f64::min) - reach).floor().max(0.0) as usize;
        let x1 = (xs.fold(f64::NEG_INFINITY, f64::max) + reach).ceil().min(self.width as f64 - 1.0);
        let y0 = (ys.clone().fold(f64::INFINITY, f64::min) - reach).floor().max(0.0) as usize;
        let y1 = (ys.fold(f64::NEG_INFINITY, f64::max) + reach).ceil().min(self.height as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            return;
        }
        let scale = 1.0 / (EDGE_SIGMA * std::f64::consts::SQRT_2);
        for py in y0..=y1 as usize {
            for px in x0..=x1 as usize {
                let p = ImagePoint::new(px as f64, py as f64);
                let mut alpha = 1.0;
                for &(n, k) in &edges {
                    let d = n.dot(p) - k;
                    if d < -4.0 * EDGE_SIGMA {
                        alpha = 0.0;
                        break;
                    }
                    if d < 4.0 * EDGE_SIGMA {
                        alpha *= 0.5 * (1.0 + libm::erf(d * scale));
                    }
                }
                if alpha > 0.0 {
                    let idx = py * self.width + px;
                    let a = alpha as f32;
                    self.samples[idx] = self.samples[idx] * (1.0 - a) + face.shade * a;
                }
            }
        }
    }

    pub fn into_image(self) -> RasterImage {
        RasterImage::new(self.width, self.height, self.samples).expect("canvas dimensions are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_line_peaks_on_its_row() {
        let mut c = Canvas::new(ImageSize::new(64, 32));
        c.line(ImagePoint::new(-20.0, 0.0), ImagePoint::new(20.0, 0.0));
        let img = c.into_image();
        assert!((img.get(32, 16) - INK).abs() < 1e-6);
        assert!(img.get(32, 15) < INK && img.get(32, 15) > BACKGROUND);
        assert_eq!(img.get(32, 10), BACKGROUND);
        assert_eq!(img.get(2, 16), BACKGROUND);
    }

    #[test]
    fn face_interior_takes_its_shade() {
        let mut c = Canvas::new(ImageSize::new(64, 64));
        let q = [(-10.0, -10.0), (10.0, -10.0), (10.0, 10.0), (-10.0, 10.0)].map(|(x, y)| ImagePoint::new(x, y));
        c.fill(&Face {
            corners: q,
            shade: 0.8,
            extend: [false; 4],
        });
        let img = c.into_image();
        assert!((img.get(32, 32) - 0.8).abs() < 1e-6);
        assert_eq!(img.get(2, 2), BACKGROUND);
        // Half coverage on the boundary.
        let mid = BACKGROUND + 0.5 * (0.8 - BACKGROUND);
        assert!((img.get(42, 32) - mid).abs() < 1e-3);
    }

    #[test]
    fn shared_edge_is_a_clean_step() {
        let mut c = Canvas::new(ImageSize::new(64, 64));
        let p = |x: f64, y: f64| ImagePoint::new(x, y);
        let left = Face {
            corners: [p(-20.0, -10.0), p(0.0, -10.0), p(0.0, 10.0), p(-20.0, 10.0)],
            shade: 0.5,
            extend: [false, true, false, false],
        };
        let right = Face {
            corners: [p(0.0, -10.0), p(20.0, -10.0), p(20.0, 10.0), p(0.0, 10.0)],
            shade: 0.9,
            extend: [false; 4],
        };
        c.fill(&left);
        c.fill(&right);
        let img = c.into_image();
        assert!((img.get(32, 32) - 0.7).abs() < 1e-3);
        for x in 24..40 {
            assert!(img.get(x + 1, 32) >= img.get(x, 32));
        }
    }

    #[test]
    fn segment_outside_is_ignored() {
        let mut c = Canvas::new(ImageSize::new(32, 32));
        c.line(ImagePoint::new(100.0, 100.0), ImagePoint::new(200.0, 150.0));
        assert!(c.samples.iter().all(|&v| v == BACKGROUND));
    }
}
