//! Vanishing point estimation from vehicle motion.
//!
//! The first vanishing point comes from straight pieces of point
//! trajectories, the second from edgelets that do not point at the first.
//! Both are voted in a [`DiamondSpace`]. The vote is followed by a second
//! accumulation in a diamond recentered on the coarse maximum, whose cells
//! are a fraction of a coarse cell wide, and by an iteratively reweighted
//! least-squares polish over the lines that agree with the voted point.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::diamond::{DiamondMaximum, DiamondSpace, LineObservation, DEFAULT_RESOLUTION};
use crate::edgelets::Edgelet;
use crate::error::{Error, Result};
use crate::geometry::{HomPoint, ImagePoint, ImageSize, Line2};

pub const MIN_DISPLACEMENT: f64 = 2.0;

/// A straight piece of one tracked point's trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub start: ImagePoint,
    pub end: ImagePoint,
    pub first_frame: u32,
    pub last_frame: u32,
    pub weight: f64,
}

impl TrajectorySegment {
    /// Segment weighted by its displacement.
    pub fn new(start: ImagePoint, end: ImagePoint, first_frame: u32, last_frame: u32) -> Result<Self> {
        let len = start.distance(end);
        if !(len >= MIN_DISPLACEMENT) {
            return Err(Error::InvalidInput(format!(
                "segment displacement {len:.3} px is below {MIN_DISPLACEMENT} px"
            )));
        }
        Ok(Self {
            start,
            end,
            first_frame,
            last_frame,
            weight: len,
        })
    }

    pub fn line(&self) -> Line2 {
        Line2::through(self.start, self.end).expect("segment endpoints are distinct")
    }

    pub fn midpoint(&self) -> ImagePoint {
        self.start.midpoint(self.end)
    }
}

/// One observation of a tracked point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub track_id: u64,
    pub frame: u32,
    pub point: ImagePoint,
}

/// Splits every point track into runs of `chunk` consecutive observations
/// and fits each run with a total-least-squares line. Runs shorter than the
/// minimum displacement are dropped.
pub fn segments_from_points(points: &[TrajectoryPoint], chunk: usize) -> Vec<TrajectorySegment> {
    let chunk = chunk.max(2);
    let mut tracks: BTreeMap<u64, Vec<(u32, ImagePoint)>> = BTreeMap::new();
    for p in points {
        tracks.entry(p.track_id).or_default().push((p.frame, p.point));
    }
    let mut out = Vec::new();
    for (_, mut obs) in tracks {
        obs.sort_by_key(|o| o.0);
        for run in obs.chunks(chunk) {
            if run.len() < 2 {
                continue;
            }
            let pts: Vec<ImagePoint> = run.iter().map(|o| o.1).collect();
            if let Some((a, b)) = fit_run(&pts) {
                if let Ok(s) = TrajectorySegment::new(a, b, run[0].0, run[run.len() - 1].0) {
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Total-least-squares line through `pts`, returned as the projections of
/// the first and last point onto it.
fn fit_run(pts: &[ImagePoint]) -> Option<(ImagePoint, ImagePoint)> {
    let n = pts.len() as f64;
    let c = pts.iter().fold(ImagePoint::ORIGIN, |acc, &p| acc + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &p in pts {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let (_, _, dir) = crate::edgelets::eigen_sym2(sxx, sxy, syy);
    if !(sxx + syy > 0.0) {
        return None;
    }
    let proj = |p: ImagePoint| c + dir * (p - c).dot(dir);
    Some((proj(pts[0]), proj(pts[pts.len() - 1])))
}

/// Line with the image point it was observed around, for angular residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchoredLine {
    pub line: Line2,
    pub anchor: ImagePoint,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpOptions {
    pub resolution: usize,
    pub min_segments: usize,
    pub min_edgelets: usize,
    /// Cap on the edgelet vote weight.
    pub max_edgelet_weight: f64,
    /// Admissible focal lengths as multiples of the image width.
    pub focal_range: (f64, f64),
    /// Largest admissible horizon inclination, in degrees.
    pub max_horizon_inclination_deg: f64,
    /// Recentred second accumulation and least-squares polish with a
    /// shrinking angular gate.
    pub refine: bool,
}

impl Default for VpOptions {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            min_segments: 50,
            min_edgelets: 200,
            max_edgelet_weight: 50.0,
            focal_range: (0.3, 10.0),
            max_horizon_inclination_deg: 45.0,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VpEstimate {
    pub point: ImagePoint,
    /// Vote mass of the coarse maximum.
    pub score: f64,
    /// Median non-empty cell of the coarse accumulator.
    pub median_cell: f64,
    /// Lines used by the final least-squares polish.
    pub inliers: usize,
    pub votes: usize,
}

impl VpEstimate {
    /// Peak-to-median ratio; values below 2 indicate a weak maximum.
    pub fn score_ratio(&self) -> f64 {
        if self.median_cell > 0.0 {
            self.score / self.median_cell
        } else {
            f64::INFINITY
        }
    }
}

type Mask<'a> = Option<&'a (dyn Fn(&HomPoint) -> bool + Sync)>;

fn vote(lines: &[AnchoredLine], size: ImageSize, opts: &VpOptions, mask: Mask<'_>) -> Result<VpEstimate> {
    let obs: Vec<LineObservation> = lines
        .iter()
        .map(|l| LineObservation::new(l.line, l.weight))
        .collect::<Result<_>>()?;
    let mut coarse = DiamondSpace::new(opts.resolution, size.half_extent())?;
    coarse.accumulate_par(&obs);
    let mask_dyn = mask.map(|m| m as &dyn Fn(&HomPoint) -> bool);
    let max = coarse.find_maximum(mask_dyn)?;
    let mut estimate = VpEstimate {
        point: finite_or_far(&max, size),
        score: max.score,
        median_cell: coarse.median_nonzero(),
        inliers: 0,
        votes: lines.len(),
    };
    if !opts.refine {
        return Ok(estimate);
    }

    let extent = coarse.cell_extent_at(max.s, max.t);
    if extent.is_finite() {
        let norm = (8.0 * extent).max(1.0);
        let mut fine = DiamondSpace::with_center(opts.resolution, norm, estimate.point)?;
        fine.accumulate_par(&obs);
        if let Ok(m) = fine.find_maximum(mask_dyn) {
            estimate.point = finite_or_far(&m, size);
        }
    }

    let mut point = estimate.point;
    let mut gate_deg = POLISH_START_DEG;
    for _ in 0..POLISH_ROUNDS {
        let Some((p, n)) = polish(lines, point, gate_deg) else {
            break;
        };
        if mask.is_some_and(|m| !m(&p.homogeneous())) {
            break;
        }
        point = p;
        estimate.inliers = n;
        // Next gate: three robust standard deviations of the current inliers.
        let mut res: Vec<f64> = lines
            .iter()
            .filter(|l| l.weight > 0.0)
            .map(|l| angular_residual(l, point).to_degrees())
            .filter(|&r| r <= gate_deg)
            .collect();
        if res.is_empty() {
            break;
        }
        let mid = res.len() / 2;
        let (_, mad, _) = res.select_nth_unstable_by(mid, f64::total_cmp);
        gate_deg = (3.0 * 1.4826 * *mad).clamp(POLISH_MIN_DEG, gate_deg);
    }
    estimate.point = point;
    Ok(estimate)
}

const POLISH_START_DEG: f64 = 2.0;
const POLISH_MIN_DEG: f64 = 0.01;
const POLISH_ROUNDS: usize = 8;

/// Finite image point of a maximum; ideal maxima are pushed far along their direction.
fn finite_or_far(m: &DiamondMaximum, size: ImageSize) -> ImagePoint {
    match m.point.to_finite() {
        Some(p) => p,
        None => {
            let d = ImagePoint::new(m.point.0.x, m.point.0.y).normalized();
            d * (1e6 * size.half_extent())
        }
    }
}

/// Acute angle (radians) between a line and the direction from its anchor to `p`.
fn angular_residual(l: &AnchoredLine, p: ImagePoint) -> f64 {
    let to = p - l.anchor;
    let r = to.norm();
    if r == 0.0 {
        return 0.0;
    }
    (l.line.signed_distance(p) / r).abs().min(1.0).asin()
}

/// One reweighted least-squares step over lines within `gate_deg` of `p`.
/// Residuals are angular, so far-away points are not dominated by lines
/// near the image.
fn polish(lines: &[AnchoredLine], p: ImagePoint, gate_deg: f64) -> Option<(ImagePoint, usize)> {
    let gate = gate_deg.to_radians();
    let sel: Vec<(Line2, f64)> = lines
        .iter()
        .filter(|l| l.weight > 0.0 && angular_residual(l, p) <= gate)
        .map(|l| {
            let r = (p - l.anchor).norm().max(1.0);
            (l.line, l.weight / (r * r))
        })
        .collect();
    if sel.len() < 2 {
        return None;
    }
    // Rescale weights so the rank test is not affected by the 1/r² factors.
    let wmax = sel.iter().map(|s| s.1).fold(0.0, f64::max);
    let sel: Vec<(Line2, f64)> = sel.into_iter().map(|(l, w)| (l, w / wmax)).collect();
    let q = crate::geometry::weighted_line_intersection(&sel).ok()?;
    q.is_finite().then_some((q, sel.len()))
}

pub fn segment_lines(segments: &[TrajectorySegment]) -> Vec<AnchoredLine> {
    segments
        .iter()
        .map(|s| AnchoredLine {
            line: s.line(),
            anchor: s.midpoint(),
            weight: s.weight,
        })
        .collect()
}

pub fn edgelet_lines(edgelets: &[Edgelet], max_weight: f64) -> Vec<AnchoredLine> {
    edgelets
        .par_iter()
        .filter_map(|e| {
            Line2::from_point_dir(e.seed, e.direction).ok().map(|line| AnchoredLine {
                line,
                anchor: e.seed,
                weight: e.quality.min(max_weight),
            })
        })
        .collect()
}

pub fn estimate_first_vp(segments: &[TrajectorySegment], size: ImageSize, opts: &VpOptions) -> Result<VpEstimate> {
    if segments.len() < opts.min_segments {
        return Err(Error::InsufficientData {
            what: "trajectory segments",
            got: segments.len(),
            need: opts.min_segments,
        });
    }
    vote(&segment_lines(segments), size, opts, None)
}

/// Admissible second vanishing points for a fixed first one.
pub fn second_vp_feasible(p: &HomPoint, vp1: ImagePoint, width: f64, opts: &VpOptions) -> bool {
    let Some(v) = p.to_finite() else {
        return false;
    };
    let radicand = -(vp1.x * v.x + vp1.y * v.y);
    if !(radicand > 0.0) {
        return false;
    }
    let f = radicand.sqrt();
    if f < opts.focal_range.0 * width || f > opts.focal_range.1 * width {
        return false;
    }
    let d = v - vp1;
    d.y.abs().atan2(d.x.abs()).to_degrees() <= opts.max_horizon_inclination_deg
}

pub fn estimate_second_vp(edgelets: &[Edgelet], vp1: ImagePoint, size: ImageSize, opts: &VpOptions) -> Result<VpEstimate> {
    if edgelets.len() < opts.min_edgelets {
        return Err(Error::InsufficientData {
            what: "edgelets",
            got: edgelets.len(),
            need: opts.min_edgelets,
        });
    }
    let width = size.width as f64;
    let mask = move |p: &HomPoint| second_vp_feasible(p, vp1, width, opts);
    vote(&edgelet_lines(edgelets, opts.max_edgelet_weight), size, opts, Some(&mask))
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationDiagnostics {
    pub vp1: VpEstimate,
    pub vp2: VpEstimate,
    pub segments: usize,
    pub edgelets: usize,
}

/// Both vanishing points and the resulting scale-free calibration.
pub fn calibrate(
    segments: &[TrajectorySegment],
    edgelets: &[Edgelet],
    size: ImageSize,
    opts: &VpOptions,
) -> Result<(CameraCalibration, CalibrationDiagnostics)> {
    let vp1 = estimate_first_vp(segments, size, opts)?;
    let vp2 = estimate_second_vp(edgelets, vp1.point, size, opts)?;
    let calib = CameraCalibration::from_vps(vp1.point, vp2.point, size)?;
    Ok((
        calib,
        CalibrationDiagnostics {
            vp1,
            vp2,
            segments: segments.len(),
            edgelets: edgelets.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn size() -> ImageSize {
        ImageSize::new(1920, 1080)
    }

    fn segments_toward(vp: ImagePoint, n: usize, rng: &mut ChaCha8Rng) -> Vec<TrajectorySegment> {
        (0..n)
            .map(|_| {
                let a = ImagePoint::new(rng.random_range(-900.0..900.0), rng.random_range(0.0..500.0));
                let d = (vp - a).normalized();
                TrajectorySegment::new(a, a + d * rng.random_range(10.0..60.0), 0, 10).unwrap()
            })
            .collect()
    }

    #[test]
    fn exact_segments_recover_first_vp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vp = ImagePoint::new(800.0, -200.0);
        let segs = segments_toward(vp, 120, &mut rng);
        let est = estimate_first_vp(&segs, size(), &VpOptions::default()).unwrap();
        assert!(est.point.distance(vp) < 1e-6, "{:?}", est.point);
    }

    #[test]
    fn too_few_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let segs = segments_toward(ImagePoint::new(800.0, -200.0), 10, &mut rng);
        assert!(matches!(
            estimate_first_vp(&segs, size(), &VpOptions::default()),
            Err(Error::InsufficientData { got: 10, need: 50, .. })
        ));
    }

    #[test]
    fn short_segments_rejected() {
        let p = ImagePoint::new(1.0, 1.0);
        assert!(TrajectorySegment::new(p, p + ImagePoint::new(1.0, 1.0), 0, 1).is_err());
    }

    #[test]
    fn chunked_fit_keeps_collinear_endpoints() {
        let pts: Vec<TrajectoryPoint> = (0..30)
            .map(|i| TrajectoryPoint {
                track_id: 7,
                frame: i,
                point: ImagePoint::new(3.0 * i as f64, 100.0 + 2.0 * i as f64),
            })
            .collect();
        let segs = segments_from_points(&pts, 10);
        assert_eq!(segs.len(), 3);
        assert!(segs[0].start.distance(ImagePoint::new(0.0, 100.0)) < 1e-9);
        assert!(segs[2].end.distance(ImagePoint::new(87.0, 158.0)) < 1e-9);
    }

    #[test]
    fn feasibility_mask() {
        let vp1 = ImagePoint::new(900.0, 60.0);
        let o = VpOptions::default();
        assert!(second_vp_feasible(&ImagePoint::new(-1500.0, 40.0).homogeneous(), vp1, 1920.0, &o));
        // Same side as vp1: imaginary focal length.
        assert!(!second_vp_feasible(&ImagePoint::new(1500.0, 40.0).homogeneous(), vp1, 1920.0, &o));
        // Steep: excluded by the horizon inclination limit.
        assert!(!second_vp_feasible(
            &ImagePoint::new(-10.0, -90000.0).homogeneous(),
            vp1,
            1920.0,
            &o
        ));
        assert!(!second_vp_feasible(&HomPoint::ideal(1.0, 0.0), vp1, 1920.0, &o));
    }
}
