//! Bounded accumulator over the whole projective plane.
//!
//! # Parameterization
//!
//! A projective image point `[x, y, w]` is first expressed relative to the
//! accumulator center and divided by the normalization distance, then scaled
//! so that `|x| + |y| + |w| = 1` with `w ≥ 0`. Its diamond coordinates are the
//! remaining `(x, y)`:
//!
//! ```text
//!   (x, y, w)  ->  (x, y) / (|x| + |y| + |w|)          w ≥ 0
//!   (s, t)     ->  (s, t, 1 - |s| - |t|)
//! ```
//!
//! Finite points land strictly inside the diamond `|s| + |t| < 1`, points at
//! infinity on its boundary, and antipodal boundary points are the same
//! ideal point. Inside each quadrant the map is projective-linear, so an
//! image line `A x + B y + C w = 0` becomes the straight segment
//! `(A - C σs) s + (B - C σt) t + C = 0` per quadrant (`σ` the quadrant
//! signs). A line therefore votes along a polyline of at most three
//! segments.
//!
//! Votes are stored as fixed-point integers: a vote of weight `w` split
//! between two cells adds `q(w) · q(frac)` and `q(w) · (1 - q(frac))`, with
//! both factors quantized independently. The grid is then exactly additive
//! and independent of the accumulation order, and two grids can be merged
//! cell by cell.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{HomPoint, ImagePoint, Line2};

pub const DEFAULT_RESOLUTION: usize = 421;

const WEIGHT_ONE: f64 = (1u64 << 20) as f64;
const FRAC_ONE: i64 = 1 << 16;

/// A line to vote for, with a non-negative weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineObservation {
    pub line: Line2,
    pub weight: f64,
}

impl LineObservation {
    pub fn new(line: Line2, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidInput(format!("vote weight {weight} must be >= 0")));
        }
        Ok(Self { line, weight })
    }
}

/// Maximum found in an accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiamondMaximum {
    /// Back-projected position, possibly ideal.
    #[serde(skip)]
    pub point: HomPoint,
    /// Vote mass of the maximal cell.
    pub score: f64,
    pub row: usize,
    pub col: usize,
    /// Refined diamond coordinates.
    pub s: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiamondSpace {
    resolution: usize,
    normalization: f64,
    center: ImagePoint,
    grid: Vec<i64>,
}

impl DiamondSpace {
    /// Accumulator centered on the principal point.
    pub fn new(resolution: usize, normalization: f64) -> Result<Self> {
        Self::with_center(resolution, normalization, ImagePoint::ORIGIN)
    }

    pub fn with_center(resolution: usize, normalization: f64, center: ImagePoint) -> Result<Self> {
        if resolution < 3 || resolution.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "diamond resolution must be odd and >= 3, got {resolution}"
            )));
        }
        if !(normalization > 0.0) || !normalization.is_finite() || !center.is_finite() {
            return Err(Error::InvalidInput("invalid diamond normalization".into()));
        }
        Ok(Self {
            resolution,
            normalization,
            center,
            grid: vec![0; resolution * resolution],
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn center(&self) -> ImagePoint {
        self.center
    }

    /// Cell value in vote units.
    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.resolution + col] as f64 / (WEIGHT_ONE * FRAC_ONE as f64)
    }

    /// Raw fixed-point cell values, row-major.
    pub fn raw_grid(&self) -> &[i64] {
        &self.grid
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.iter().map(|&v| v as f64).sum::<f64>() / (WEIGHT_ONE * FRAC_ONE as f64)
    }

    pub fn clear(&mut self) {
        self.grid.iter_mut().for_each(|v| *v = 0);
    }

    /// Image point to diamond coordinates.
    pub fn to_diamond(&self, p: &HomPoint) -> (f64, f64) {
        let v = &p.0;
        let mut x = (v.x - self.center.x * v.z) / self.normalization;
        let mut y = (v.y - self.center.y * v.z) / self.normalization;
        let mut w = v.z;
        if w < 0.0 {
            x = -x;
            y = -y;
            w = -w;
        }
        let l1 = x.abs() + y.abs() + w;
        (x / l1, y / l1)
    }

    /// Diamond coordinates back to an image point; boundary points are ideal.
    pub fn from_diamond(&self, s: f64, t: f64) -> HomPoint {
        let w = (1.0 - s.abs() - t.abs()).max(0.0);
        HomPoint::new(
            s * self.normalization + self.center.x * w,
            t * self.normalization + self.center.y * w,
            w,
        )
    }

    fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let d = self.resolution as f64;
        (-1.0 + (col as f64 + 0.5) * 2.0 / d, -1.0 + (row as f64 + 0.5) * 2.0 / d)
    }

    fn in_diamond(&self, row: usize, col: usize) -> bool {
        // A cell belongs to the diamond if any part of it does.
        let (s, t) = self.cell_center(row, col);
        let half = 1.0 / self.resolution as f64;
        (s.abs() - half).max(0.0) + (t.abs() - half).max(0.0) <= 1.0
    }

    /// Line coefficients relative to the accumulator frame.
    fn local_line(&self, l: &Line2) -> [f64; 3] {
        [
            l.a * self.normalization,
            l.b * self.normalization,
            l.a * self.center.x + l.b * self.center.y + l.c,
        ]
    }

    /// The polyline a line occupies in diamond coordinates, one segment per quadrant.
    pub fn line_segments(&self, l: &Line2) -> Vec<[(f64, f64); 2]> {
        let [a, b, c] = self.local_line(l);
        let mut out = Vec::with_capacity(3);
        for (ss, st) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
            let alpha = a - c * ss;
            let beta = b - c * st;
            let tri = [(0.0, 0.0), (ss, 0.0), (0.0, st)];
            let g = |p: (f64, f64)| alpha * p.0 + beta * p.1 + c;
            let mut pts: Vec<(f64, f64)> = Vec::with_capacity(3);
            for k in 0..3 {
                let p = tri[k];
                let q = tri[(k + 1) % 3];
                let (gp, gq) = (g(p), g(q));
                if gp == 0.0 {
                    pts.push(p);
                }
                if (gp < 0.0 && gq > 0.0) || (gp > 0.0 && gq < 0.0) {
                    let r = gp / (gp - gq);
                    pts.push((p.0 + (q.0 - p.0) * r, p.1 + (q.1 - p.1) * r));
                }
            }
            if pts.len() < 2 {
                continue;
            }
            // Keep the two most distant points (handles duplicates at vertices).
            let mut best = (0, 1, -1.0);
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let d = (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2);
                    if d > best.2 {
                        best = (i, j, d);
                    }
                }
            }
            if best.2 > 0.0 {
                out.push([pts[best.0], pts[best.1]]);
            }
        }
        out
    }

    /// Rasterizes one line into the grid.
    pub fn accumulate_line(&mut self, obs: &LineObservation) {
        let wq = (obs.weight * WEIGHT_ONE).round() as i64;
        if wq == 0 {
            return;
        }
        for seg in self.line_segments(&obs.line) {
            self.raster_segment(seg, wq);
        }
    }

    pub fn accumulate<'a, I: IntoIterator<Item = &'a LineObservation>>(&mut self, lines: I) {
        for l in lines {
            self.accumulate_line(l);
        }
    }

    /// Accumulates in parallel shards and merges them. The result is
    /// identical to sequential accumulation.
    pub fn accumulate_par(&mut self, lines: &[LineObservation]) {
        const SHARD: usize = 2048;
        if lines.len() <= SHARD {
            self.accumulate(lines);
            return;
        }
        let empty = Self {
            grid: vec![0; self.grid.len()],
            ..self.clone()
        };
        let merged = lines
            .par_chunks(SHARD)
            .map(|chunk| {
                let mut s = empty.clone();
                s.accumulate(chunk);
                s
            })
            .reduce_with(|mut a, b| {
                a.grid.iter_mut().zip(&b.grid).for_each(|(x, y)| *x += *y);
                a
            });
        if let Some(m) = merged {
            self.grid.iter_mut().zip(&m.grid).for_each(|(x, y)| *x += *y);
        }
    }

    fn raster_segment(&mut self, seg: [(f64, f64); 2], wq: i64) {
        let d = self.resolution as f64;
        // Continuous cell coordinates; cell centers sit on integers.
        let to_grid = |(s, t): (f64, f64)| ((s + 1.0) * 0.5 * d - 0.5, (t + 1.0) * 0.5 * d - 0.5);
        let (x0, y0) = to_grid(seg[0]);
        let (x1, y1) = to_grid(seg[1]);
        let steep = (y1 - y0).abs() > (x1 - x0).abs();
        // Walk along the major axis; (major, minor) = (col, row) or (row, col).
        let (m0, n0, m1, n1) = if steep { (y0, x0, y1, x1) } else { (x0, y0, x1, y1) };
        let (m0, n0, m1, n1) = if m0 <= m1 { (m0, n0, m1, n1) } else { (m1, n1, m0, n0) };
        let dm = m1 - m0;
        let first = m0.ceil().max(0.0) as i64;
        let last = m1.floor().min(d - 1.0) as i64;
        let res = self.resolution as i64;
        for m in first..=last {
            // Half-open along the major axis so joints are not counted twice.
            if m as f64 == m1 && dm > 0.0 {
                continue;
            }
            let n = if dm > 0.0 { n0 + (n1 - n0) * ((m as f64 - m0) / dm) } else { n0 };
            let nf = n.floor();
            let frac = ((n - nf) * FRAC_ONE as f64).round() as i64;
            let lo = nf as i64;
            for (idx, share) in [(lo, FRAC_ONE - frac), (lo + 1, frac)] {
                if share == 0 || idx < 0 || idx >= res {
                    continue;
                }
                let (row, col) = if steep { (m, idx) } else { (idx, m) };
                self.grid[(row * res + col) as usize] += wq * share;
            }
        }
    }

    /// Adds another accumulator with identical geometry cell by cell.
    pub fn merge(&mut self, other: &DiamondSpace) -> Result<()> {
        if self.resolution != other.resolution || self.normalization != other.normalization || self.center != other.center {
            return Err(Error::InvalidInput("cannot merge accumulators of different geometry".into()));
        }
        for (a, b) in self.grid.iter_mut().zip(&other.grid) {
            *a += *b;
        }
        Ok(())
    }

    /// Global maximum over cells accepted by `mask`, refined to sub-cell
    /// precision by the 3×3 center of mass. Equal maxima resolve to the
    /// smallest row-major index.
    pub fn find_maximum(&self, mask: Option<&dyn Fn(&HomPoint) -> bool>) -> Result<DiamondMaximum> {
        if self.grid.iter().all(|&v| v == 0) {
            return Err(Error::EmptyAccumulator);
        }
        let n = self.resolution;
        let mut best: Option<(usize, i64)> = None;
        for row in 0..n {
            for col in 0..n {
                let v = self.grid[row * n + col];
                if v <= 0 || best.is_some_and(|(_, b)| v <= b) {
                    continue;
                }
                if !self.in_diamond(row, col) {
                    continue;
                }
                if let Some(m) = mask {
                    let (s, t) = self.cell_center(row, col);
                    if !m(&self.from_diamond(s, t)) {
                        continue;
                    }
                }
                best = Some((row * n + col, v));
            }
        }
        let (idx, value) = best.ok_or(Error::AllMasked)?;
        let (row, col) = (idx / n, idx % n);
        let (mut ws, mut wt, mut wsum) = (0.0, 0.0, 0.0);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (r, c) = (row as i64 + dr, col as i64 + dc);
                if r < 0 || c < 0 || r >= n as i64 || c >= n as i64 {
                    continue;
                }
                let v = self.grid[r as usize * n + c as usize] as f64;
                let (s, t) = self.cell_center(r as usize, c as usize);
                ws += v * s;
                wt += v * t;
                wsum += v;
            }
        }
        let (mut s, mut t) = (ws / wsum, wt / wsum);
        let l1 = s.abs() + t.abs();
        if l1 > 1.0 {
            s /= l1;
            t /= l1;
        }
        Ok(DiamondMaximum {
            point: self.from_diamond(s, t),
            score: value as f64 / (WEIGHT_ONE * FRAC_ONE as f64),
            row,
            col,
            s,
            t,
        })
    }

    /// Median vote mass over non-empty cells inside the diamond.
    pub fn median_nonzero(&self) -> f64 {
        let mut v: Vec<i64> = self.grid.iter().copied().filter(|&x| x > 0).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_unstable();
        v[(v.len() - 1) / 2] as f64 / (WEIGHT_ONE * FRAC_ONE as f64)
    }

    /// Image-space extent of one cell around diamond position `(s, t)`:
    /// the largest distance from the back-projected position to the
    /// back-projection of a point one cell away. Infinite near the boundary.
    pub fn cell_extent_at(&self, s: f64, t: f64) -> f64 {
        let Some(p) = self.from_diamond(s, t).to_finite() else {
            return f64::INFINITY;
        };
        let step = 2.0 / self.resolution as f64;
        let mut ext: f64 = 0.0;
        for (ds, dt) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            match self.from_diamond(s + ds, t + dt).to_finite() {
                Some(q) => ext = ext.max(q.distance(p)),
                None => return f64::INFINITY,
            }
        }
        ext
    }

    /// Writes the grid as a 16-bit binary PGM, linearly scaled to the maximum.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let max = self.grid.iter().copied().max().unwrap_or(0).max(1) as f64;
        let n = self.resolution;
        let mut buf = format!("P5\n{n} {n}\n65535\n").into_bytes();
        buf.reserve(n * n * 2);
        for &v in &self.grid {
            let q = ((v.max(0) as f64 / max) * 65535.0).round() as u16;
            buf.extend_from_slice(&q.to_be_bytes());
        }
        crate::io::write_atomic(path, &buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> DiamondSpace {
        DiamondSpace::new(DEFAULT_RESOLUTION, 960.0).unwrap()
    }

    fn line_through(p: ImagePoint, angle: f64) -> LineObservation {
        LineObservation::new(Line2::from_point_dir(p, ImagePoint::new(angle.cos(), angle.sin())).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn even_resolution_rejected() {
        assert!(DiamondSpace::new(420, 1.0).is_err());
    }

    #[test]
    fn empty_space_has_no_maximum() {
        assert!(matches!(space().find_maximum(None), Err(Error::EmptyAccumulator)));
    }

    #[test]
    fn mask_excluding_everything() {
        let mut ds = space();
        ds.accumulate_line(&line_through(ImagePoint::new(10.0, 20.0), 0.3));
        let none = |_: &HomPoint| false;
        assert!(matches!(ds.find_maximum(Some(&none)), Err(Error::AllMasked)));
    }

    #[test]
    fn twice_weight_one_equals_once_weight_two() {
        let l = line_through(ImagePoint::new(-120.0, 45.0), 1.1);
        let mut a = space();
        a.accumulate_line(&l);
        a.accumulate_line(&l);
        let mut b = space();
        b.accumulate_line(&LineObservation::new(l.line, 2.0).unwrap());
        assert_eq!(a.raw_grid(), b.raw_grid());
    }

    #[test]
    fn lines_through_center_peak_at_center() {
        let mut ds = space();
        for k in 0..100 {
            ds.accumulate_line(&line_through(ImagePoint::ORIGIN, k as f64 * 0.031));
        }
        let m = ds.find_maximum(None).unwrap();
        let p = m.point.to_finite().unwrap();
        assert!(p.norm() <= ds.cell_extent_at(0.0, 0.0), "{p:?}");
    }

    #[test]
    fn single_line_maximum_lies_on_it() {
        let mut ds = space();
        let l = line_through(ImagePoint::new(300.0, -200.0), 0.7);
        ds.accumulate_line(&l);
        let m = ds.find_maximum(None).unwrap();
        let p = m.point.to_finite().unwrap();
        assert!(l.line.distance(p) < ds.cell_extent_at(m.s, m.t), "{p:?}");
    }

    #[test]
    fn line_crosses_at_most_three_quadrants() {
        let ds = space();
        for k in 0..50 {
            let l = line_through(ImagePoint::new(k as f64 * 37.0 - 900.0, 120.0 - k as f64 * 11.0), k as f64 * 0.37);
            assert!(ds.line_segments(&l.line).len() <= 3);
        }
    }

    #[test]
    fn pgm_dump_has_header() {
        let mut ds = DiamondSpace::new(11, 1.0).unwrap();
        ds.accumulate_line(&line_through(ImagePoint::ORIGIN, 0.2));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pgm");
        ds.write_pgm(&path).unwrap();
        let bytes = std::fs::read(path).unwrap();
        assert!(bytes.starts_with(b"P5\n11 11\n65535\n"));
        assert_eq!(bytes.len(), "P5\n11 11\n65535\n".len() + 11 * 11 * 2);
    }
}
