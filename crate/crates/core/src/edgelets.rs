//! Oriented edge primitives ("edgelets") for the second vanishing point.
//!
//! Seeds are local maxima of the gradient magnitude. Around each seed
//! the 9×9 neighborhood forms the 81×2 matrix of magnitude-weighted offsets;
//! the principal eigenvector of its 2×2 scatter gives the edge direction and
//! the ratio of its singular values the edge quality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImagePoint, ImageSize};
use crate::raster::RasterImage;

/// Half-size of the square patch (9×9).
pub const PATCH_RADIUS: usize = 4;

/// Quality reported when the minor singular value vanishes.
pub const MAX_QUALITY: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f32>,
    gy: Vec<f32>,
    magnitude: Vec<f32>,
}

impl GradientField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn gradient(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.gx[i], self.gy[i])
    }

    #[inline]
    pub fn magnitude(&self, x: usize, y: usize) -> f32 {
        self.magnitude[y * self.width + x]
    }

    pub fn magnitudes(&self) -> &[f32] {
        &self.magnitude
    }

    pub fn max_magnitude(&self) -> f32 {
        self.magnitude.iter().copied().fold(0.0, f32::max)
    }

    /// Field from precomputed derivatives.
    pub fn from_components(width: usize, height: usize, gx: Vec<f32>, gy: Vec<f32>) -> Result<Self> {
        if gx.len() != width * height || gy.len() != width * height {
            return Err(Error::InvalidInput("gradient dimensions do not match".into()));
        }
        let magnitude = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
        Ok(Self {
            width,
            height,
            gx,
            gy,
            magnitude,
        })
    }

    fn size(&self) -> ImageSize {
        ImageSize::new(self.width as u32, self.height as u32)
    }
}

/// Central differences inside, one-sided differences on the border.
pub fn gradient_field(img: &RasterImage) -> GradientField {
    let (w, h) = (img.width(), img.height());
    let s = img.samples();
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            gx[row + x] = if x == 0 {
                s[row + 1] - s[row]
            } else if x == w - 1 {
                s[row + x] - s[row + x - 1]
            } else {
                0.5 * (s[row + x + 1] - s[row + x - 1])
            };
            gy[row + x] = if y == 0 {
                s[row + w + x] - s[row + x]
            } else if y == h - 1 {
                s[row + x] - s[row - w + x]
            } else {
                0.5 * (s[row + w + x] - s[row - w + x])
            };
        }
    }
    let magnitude = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
    }
}

/// 3×3 local maxima of the magnitude above `threshold`, far enough from the
/// border for a full patch.
///
/// A seed is at least as large as all eight neighbors. Along the gradient
/// direction (across the edge) it must be strictly larger, except that an
/// equal neighbor with a larger row-major index is allowed; a two-pixel-wide
/// ridge therefore keeps exactly one side. Equal neighbors along the edge are
/// allowed, so a noise-free straight edge yields a seed in every row or
/// column it crosses.
pub fn detect_seeds(grad: &GradientField, mask: Option<&[bool]>, threshold: f32) -> Vec<(usize, usize)> {
    let (w, h) = (grad.width, grad.height);
    let m = &grad.magnitude;
    let r = PATCH_RADIUS;
    let mut seeds = Vec::new();
    if w <= 2 * r || h <= 2 * r {
        return seeds;
    }
    for y in r..h - r {
        for x in r..w - r {
            let i = y * w + x;
            let v = m[i];
            if v <= threshold {
                continue;
            }
            if mask.is_some_and(|mk| !mk[i]) {
                continue;
            }
            let (ax, ay) = across_offset(grad.gx[i], grad.gy[i]);
            let mut is_max = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let j = (i as i64 + dy * w as i64 + dx) as usize;
                    let u = m[j];
                    let across = (dx == ax && dy == ay) || (dx == -ax && dy == -ay);
                    if u > v || (across && u == v && j < i) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                seeds.push((x, y));
            }
        }
    }
    seeds
}

/// Neighbor offset closest to the gradient direction (one of four axes).
fn across_offset(gx: f32, gy: f32) -> (i64, i64) {
    let a = gy.atan2(gx).to_degrees().rem_euclid(180.0);
    if !(22.5..157.5).contains(&a) {
        (1, 0)
    } else if a < 67.5 {
        (1, 1)
    } else if a < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// An oriented edge sample: seed, unit direction along the edge, quality ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edgelet {
    pub seed: ImagePoint,
    pub direction: ImagePoint,
    pub quality: f64,
}

/// Eigen-decomposition of a symmetric 2×2 matrix `[[a, b], [b, c]]`.
///
/// Returns `(λ₁, λ₂, v₁)` with `λ₁ ≥ λ₂` and `v₁` the unit eigenvector of `λ₁`.
pub fn eigen_sym2(a: f64, b: f64, c: f64) -> (f64, f64, ImagePoint) {
    let half_tr = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    (half_tr + r, half_tr - r, ImagePoint::new(theta.cos(), theta.sin()))
}

/// Radius of the biweight window applied inside the patch, pixels. It
/// reaches zero just past the patch's inscribed circle, so the square's
/// corners carry no weight.
pub const WINDOW_RADIUS: f64 = 4.5;

/// Biweight `(1 − r²/R²)²` of a patch offset.
pub fn window_weight(dx: i64, dy: i64) -> f64 {
    let r2 = (dx * dx + dy * dy) as f64;
    (1.0 - r2 / (WINDOW_RADIUS * WINDOW_RADIUS)).max(0.0).powi(2)
}

/// Scatter `XᵀX` of the magnitude-weighted patch offsets around `(x, y)`,
/// returned as `(Σ w²dx², Σ w²dx·dy, Σ w²dy²)` with `w` the gradient
/// magnitude times [`window_weight`]. The smooth round window keeps an
/// oblique edge from being cut unevenly by the square's sides.
pub fn patch_scatter(grad: &GradientField, x: usize, y: usize) -> (f64, f64, f64) {
    let r = PATCH_RADIUS as i64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for dy in -r..=r {
        for dx in -r..=r {
            let m = grad.magnitude((x as i64 + dx) as usize, (y as i64 + dy) as usize) as f64;
            let wk = window_weight(dx, dy) * m;
            let (ex, ey) = (wk * dx as f64, wk * dy as f64);
            sxx += ex * ex;
            sxy += ex * ey;
            syy += ey * ey;
        }
    }
    (sxx, sxy, syy)
}

pub fn edgelet_at(grad: &GradientField, x: usize, y: usize) -> Result<Edgelet> {
    let r = PATCH_RADIUS;
    if x < r || y < r || x + r >= grad.width || y + r >= grad.height {
        return Err(Error::InvalidInput(format!("patch at ({x}, {y}) leaves the image")));
    }
    let (a, b, c) = patch_scatter(grad, x, y);
    let (l1, l2, mut d) = eigen_sym2(a, b, c);
    if !(l1 >= 1e-12) {
        return Err(Error::DegeneratePatch);
    }
    // Singular values of X are the square roots of the scatter eigenvalues.
    let quality = if l2 > 0.0 { (l1 / l2).sqrt().min(MAX_QUALITY) } else { MAX_QUALITY };
    if d.y < 0.0 || (d.y == 0.0 && d.x < 0.0) {
        d = -d;
    }
    Ok(Edgelet {
        seed: ImagePoint::from_top_left(x as f64, y as f64, grad.size()),
        direction: d,
        quality,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeletOptions {
    /// Fraction of the strongest edgelets kept after pooling all frames.
    pub keep_fraction: f64,
    /// Edgelets whose line passes within this angle of the first VP are dropped.
    pub vp1_exclusion_deg: f64,
    /// Seed threshold relative to the frame's largest gradient magnitude.
    pub seed_threshold_rel: f32,
}

impl Default for EdgeletOptions {
    fn default() -> Self {
        Self {
            keep_fraction: 0.25,
            vp1_exclusion_deg: 15.0,
            seed_threshold_rel: 0.1,
        }
    }
}

/// All edgelets of one frame, before any filtering.
pub fn frame_edgelets(img: &RasterImage, seed_threshold_rel: f32) -> Vec<Edgelet> {
    let grad = gradient_field(img);
    let threshold = seed_threshold_rel * grad.max_magnitude();
    if !(threshold > 0.0) {
        return Vec::new();
    }
    detect_seeds(&grad, img.mask(), threshold)
        .into_iter()
        .filter_map(|(x, y)| edgelet_at(&grad, x, y).ok())
        .collect()
}

/// Acute angle (degrees) between the edgelet line and the direction to `vp`.
pub fn angle_to_point_deg(e: &Edgelet, vp: ImagePoint) -> f64 {
    let to = vp - e.seed;
    let n = to.norm();
    if n == 0.0 {
        return 0.0;
    }
    let c = (e.direction.dot(to) / n).abs().min(1.0);
    c.acos().to_degrees()
}

/// Pools per-frame edgelets, drops those aligned with `vp1` and keeps the
/// strongest fraction. Ordering is by quality, then seed position, so the
/// result does not depend on the order frames were processed in.
#[derive(Debug, Clone)]
pub struct EdgeletCollector {
    vp1: ImagePoint,
    options: EdgeletOptions,
    pooled: Vec<Edgelet>,
    frames: usize,
}

impl EdgeletCollector {
    pub fn new(vp1: ImagePoint, options: EdgeletOptions) -> Self {
        Self {
            vp1,
            options,
            pooled: Vec::new(),
            frames: 0,
        }
    }

    pub fn push_frame(&mut self, img: &RasterImage) {
        let edgelets = frame_edgelets(img, self.options.seed_threshold_rel);
        self.push_edgelets(edgelets);
    }

    pub fn push_edgelets(&mut self, edgelets: Vec<Edgelet>) {
        self.frames += 1;
        let limit = self.options.vp1_exclusion_deg;
        let vp1 = self.vp1;
        self.pooled
            .extend(edgelets.into_iter().filter(|e| angle_to_point_deg(e, vp1) >= limit));
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn finish(self) -> Vec<Edgelet> {
        select_strongest(self.pooled, self.options.keep_fraction)
    }
}

/// Keeps the top `fraction` by quality with a total, deterministic order.
pub fn select_strongest(mut edgelets: Vec<Edgelet>, fraction: f64) -> Vec<Edgelet> {
    edgelets.sort_by(|a, b| {
        b.quality
            .total_cmp(&a.quality)
            .then(a.seed.y.total_cmp(&b.seed.y))
            .then(a.seed.x.total_cmp(&b.seed.x))
            .then(a.direction.x.total_cmp(&b.direction.x))
    });
    let keep = ((edgelets.len() as f64) * fraction.clamp(0.0, 1.0)).ceil() as usize;
    edgelets.truncate(keep);
    edgelets
}

/// Frame-stream front end: extracts edgelets from every frame (in parallel)
/// and applies the first-VP exclusion and the global strength selection.
pub fn collect_edgelets<F>(frame_count: usize, frame: F, vp1: ImagePoint, options: EdgeletOptions) -> Result<Vec<Edgelet>>
where
    F: Fn(usize) -> Result<RasterImage> + Sync,
{
    let per_frame: Vec<Vec<Edgelet>> = (0..frame_count)
        .into_par_iter()
        .map(|i| frame(i).map(|img| frame_edgelets(&img, options.seed_threshold_rel)))
        .collect::<Result<_>>()?;
    let mut collector = EdgeletCollector::new(vp1, options);
    for e in per_frame {
        collector.push_edgelets(e);
    }
    Ok(collector.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_edge(col: usize) -> RasterImage {
        RasterImage::from_fn(32, 32, |x, _| if x >= col { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn constant_image_has_zero_gradient_and_no_seeds() {
        let img = RasterImage::filled(20, 20, 0.4).unwrap();
        let g = gradient_field(&img);
        assert!(g.magnitudes().iter().all(|&m| m == 0.0));
        assert!(detect_seeds(&g, None, 1e-6).is_empty());
        assert!(frame_edgelets(&img, 0.1).is_empty());
    }

    #[test]
    fn ramp_has_constant_derivative() {
        let w = 40;
        let img = RasterImage::from_fn(w, 20, |x, _| x as f32 / w as f32).unwrap();
        let g = gradient_field(&img);
        for y in 1..19 {
            for x in 1..w - 1 {
                let (gx, gy) = g.gradient(x, y);
                assert!((gx - 1.0 / w as f32).abs() < 1e-6);
                assert_eq!(gy, 0.0);
            }
        }
    }

    #[test]
    fn step_edge_magnitude_peaks_on_edge_columns() {
        let g = gradient_field(&step_edge(16));
        let col_max = (0..32)
            .max_by(|&a, &b| g.magnitude(a, 10).total_cmp(&g.magnitude(b, 10)).then(b.cmp(&a)))
            .unwrap();
        assert!(col_max == 15 || col_max == 16);
    }

    #[test]
    fn vertical_step_edge_gives_vertical_direction() {
        let g = gradient_field(&step_edge(16));
        let e = edgelet_at(&g, 16, 16).unwrap();
        assert!((e.direction - ImagePoint::new(0.0, 1.0)).norm() < 1e-6);
        assert!(e.quality > 1.0);
    }

    #[test]
    fn mass_on_one_column_gives_maximal_quality() {
        let (w, h) = (32, 32);
        let gx: Vec<f32> = (0..w * h).map(|i| if i % w == 16 { 1.0 } else { 0.0 }).collect();
        let g = GradientField::from_components(w, h, gx, vec![0.0; w * h]).unwrap();
        let e = edgelet_at(&g, 16, 16).unwrap();
        assert!((e.direction - ImagePoint::new(0.0, 1.0)).norm() < 1e-12);
        assert!(e.quality > 100.0);
    }

    #[test]
    fn step_edge_seeds_one_per_row() {
        let g = gradient_field(&step_edge(16));
        let seeds = detect_seeds(&g, None, 0.1);
        assert_eq!(seeds.len(), 32 - 2 * PATCH_RADIUS);
        assert!(seeds.iter().all(|&(x, _)| x == 15));
    }

    #[test]
    fn flat_patch_is_degenerate() {
        let g = gradient_field(&RasterImage::filled(20, 20, 0.0).unwrap());
        assert!(matches!(edgelet_at(&g, 10, 10), Err(Error::DegeneratePatch)));
    }

    #[test]
    fn closed_form_eigen_matches_definition() {
        let (a, b, c) = (3.0, 1.2, 0.5);
        let (l1, l2, v) = eigen_sym2(a, b, c);
        assert!(l1 >= l2);
        assert!(((a * v.x + b * v.y) - l1 * v.x).abs() < 1e-12);
        assert!(((b * v.x + c * v.y) - l1 * v.y).abs() < 1e-12);
        assert!((l1 + l2 - (a + c)).abs() < 1e-12);
        assert!((l1 * l2 - (a * c - b * b)).abs() < 1e-12);
    }

    #[test]
    fn mask_removes_seeds() {
        let img = step_edge(16);
        let g = gradient_field(&img);
        assert!(!detect_seeds(&g, None, 0.1).is_empty());
        let mask = vec![false; 32 * 32];
        assert!(detect_seeds(&g, Some(&mask), 0.1).is_empty());
    }

    #[test]
    fn keep_all_without_exclusion_is_concatenation() {
        let img = RasterImage::from_fn(48, 48, |x, y| {
            let d = (x as f32 - y as f32 * 0.5 - 10.0).abs();
            (-(d * d) / 2.0).exp()
        })
        .unwrap();
        let all = frame_edgelets(&img, 0.1);
        assert!(!all.is_empty());
        let opts = EdgeletOptions {
            keep_fraction: 1.0,
            vp1_exclusion_deg: 0.0,
            seed_threshold_rel: 0.1,
        };
        let got = collect_edgelets(1, |_| Ok(img.clone()), ImagePoint::new(1e4, 0.0), opts).unwrap();
        assert_eq!(got.len(), all.len());
        for e in &all {
            assert!(got.contains(e));
        }
    }

    #[test]
    fn edges_pointing_at_vp1_are_excluded() {
        // Radial lines through the image point (0, -400) in centered coordinates.
        let (w, h) = (64usize, 64usize);
        let vp = ImagePoint::new(0.0, -400.0);
        let img = RasterImage::from_fn(w, h, |x, y| {
            let p = ImagePoint::from_top_left(x as f64, y as f64, ImageSize::new(w as u32, h as u32));
            let ang = (p - vp).x.atan2((p - vp).y);
            let s = (ang * 120.0).sin();
            (0.5 + 0.5 * s) as f32
        })
        .unwrap();
        let got = collect_edgelets(1, |_| Ok(img.clone()), vp, EdgeletOptions::default()).unwrap();
        assert!(got.is_empty(), "{} edgelets survived", got.len());
    }
}
