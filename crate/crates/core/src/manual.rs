//! Supervised calibration baselines: vanishing points from marked lines,
//! grid refinement of the second vanishing point against measured
//! distances, scale from measured distances, and scale from known speeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::error::{Error, Result};
use crate::geometry::{weighted_line_intersection, ImagePoint, ImageSize, Line2};

/// A marked road segment of known length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredSegment {
    pub p1: ImagePoint,
    pub p2: ImagePoint,
    pub meters: f64,
}

/// Manually annotated scene markings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMarking {
    /// Lines pointing toward the first vanishing point.
    pub lane_lines: Vec<[ImagePoint; 2]>,
    /// Lines pointing toward the second vanishing point.
    pub perpendicular_lines: Vec<[ImagePoint; 2]>,
    /// Segments along the traffic flow.
    pub d1: Vec<MeasuredSegment>,
    /// Segments perpendicular to the flow.
    pub d2: Vec<MeasuredSegment>,
}

impl GroundTruthMarking {
    pub fn validate(&self) -> Result<()> {
        let lines = self.lane_lines.iter().chain(&self.perpendicular_lines);
        if lines.into_iter().any(|l| l[0] == l[1]) {
            return Err(Error::InvalidInput("marked line with identical endpoints".into()));
        }
        for s in self.d1.iter().chain(&self.d2) {
            if !(s.meters > 0.0) || s.p1 == s.p2 {
                return Err(Error::InvalidInput(
                    "measured segment must have distinct endpoints and d > 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> impl Iterator<Item = &MeasuredSegment> {
        self.d1.iter().chain(&self.d2)
    }
}

/// Point minimizing the sum of squared distances to the lines.
pub fn vp_least_squares(lines: &[Line2]) -> Result<ImagePoint> {
    let weighted: Vec<(Line2, f64)> = lines.iter().map(|&l| (l, 1.0)).collect();
    weighted_line_intersection(&weighted)
}

fn lines_of(pairs: &[[ImagePoint; 2]]) -> Result<Vec<Line2>> {
    pairs.iter().map(|p| Line2::through(p[0], p[1])).collect()
}

/// Mean of `d / ‖P₁ − P₂‖` over the segments.
pub fn manual_scale(calib: &CameraCalibration, segments: &[MeasuredSegment]) -> Result<f64> {
    if segments.is_empty() {
        return Err(Error::InsufficientData {
            what: "measured segments",
            got: 0,
            need: 1,
        });
    }
    let mut sum = 0.0;
    for s in segments {
        sum += s.meters / calib.pseudo_distance(s.p1, s.p2)?;
    }
    Ok(sum / segments.len() as f64)
}

/// Scale making measured speeds agree with ground truth on average:
/// mean of `v_gt / v` over pairs `(v measured at λ = 1, v_gt)`.
pub fn speed_scale(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyMatches);
    }
    if pairs.iter().any(|&(v, _)| !(v > 0.0)) {
        return Err(Error::InvalidInput("measured speeds must be positive".into()));
    }
    Ok(pairs.iter().map(|&(v, gt)| gt / v).sum::<f64>() / pairs.len() as f64)
}

/// `Σ_{D₂} |λ ‖P₁ − P₂‖ − d|` with `λ` from the D₁ segments for the same VPs.
pub fn second_vp_objective(vp1: ImagePoint, vp2: ImagePoint, size: ImageSize, markings: &GroundTruthMarking) -> Result<f64> {
    let calib = CameraCalibration::from_vps(vp1, vp2, size)?;
    let lambda = manual_scale(&calib, &markings.d1)?;
    let mut sum = 0.0;
    for s in &markings.d2 {
        sum += (lambda * calib.pseudo_distance(s.p1, s.p2)? - s.meters).abs();
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Candidate spacing in pixels.
    pub spacing: f64,
    /// Admissible focal lengths as multiples of the image width.
    pub focal_range: (f64, f64),
    /// Largest distance of a candidate from the first VP, in image widths.
    pub max_distance: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            spacing: 2.0,
            focal_range: (0.3, 10.0),
            max_distance: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondVpFit {
    pub vp2: ImagePoint,
    pub objective: f64,
    pub candidates: usize,
    /// Fewer than two D₂ segments constrain the fit.
    pub low_confidence: bool,
}

/// Candidates `v_init + k · spacing · d` on the line through the first VP
/// and `v_init`, restricted to admissible focal lengths.
pub fn second_vp_grid(vp1: ImagePoint, v_init: ImagePoint, size: ImageSize, opts: &GridOptions) -> Result<Vec<ImagePoint>> {
    if !(v_init.distance(vp1) > 0.0) {
        return Err(Error::DegenerateVps);
    }
    let d = (v_init - vp1).normalized();
    let w = size.width as f64;
    let (fmin, fmax) = (opts.focal_range.0 * w, opts.focal_range.1 * w);
    // Along v = v_init + s d, f² = −u·v is affine in s.
    let f2_0 = -vp1.dot(v_init);
    let slope = -vp1.dot(d);
    let s_limit = opts.max_distance * w;
    let s_init = (v_init - vp1).norm();
    let (mut lo, mut hi) = (-s_init, s_limit - s_init);
    if slope.abs() > 1e-12 {
        let a = (fmin * fmin - f2_0) / slope;
        let b = (fmax * fmax - f2_0) / slope;
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    } else if !(f2_0 >= fmin * fmin && f2_0 <= fmax * fmax) {
        return Err(Error::EmptyFeasibleGrid);
    }
    let (k0, k1) = ((lo / opts.spacing).ceil() as i64, (hi / opts.spacing).floor() as i64);
    if k1 < k0 {
        return Err(Error::EmptyFeasibleGrid);
    }
    Ok((k0..=k1).map(|k| v_init + d * (k as f64 * opts.spacing)).collect())
}

/// Grid search of the second VP minimizing [`second_vp_objective`]; ties go
/// to the candidate nearest `v_init`.
pub fn optimize_second_vp(
    vp1: ImagePoint,
    v_init: ImagePoint,
    size: ImageSize,
    markings: &GroundTruthMarking,
    opts: &GridOptions,
) -> Result<SecondVpFit> {
    if markings.d2.is_empty() {
        return Err(Error::InsufficientData {
            what: "perpendicular segments",
            got: 0,
            need: 1,
        });
    }
    let grid = second_vp_grid(vp1, v_init, size, opts)?;
    let best = grid
        .par_iter()
        .filter_map(|&v| {
            let obj = second_vp_objective(vp1, v, size, markings).ok()?;
            obj.is_finite().then_some((obj, v.distance(v_init), v))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .ok_or(Error::EmptyFeasibleGrid)?;
    Ok(SecondVpFit {
        vp2: best.2,
        objective: best.0,
        candidates: grid.len(),
        low_confidence: markings.d2.len() < 2,
    })
}

/// Full manual calibration: both VPs from marked lines, second VP refined
/// on the grid, scale from the D₁ segments.
pub fn manual_calibration(markings: &GroundTruthMarking, size: ImageSize, opts: &GridOptions) -> Result<(CameraCalibration, SecondVpFit)> {
    markings.validate()?;
    let vp1 = vp_least_squares(&lines_of(&markings.lane_lines)?)?;
    let v_init = vp_least_squares(&lines_of(&markings.perpendicular_lines)?)?;
    let fit = optimize_second_vp(vp1, v_init, size, markings, opts)?;
    let calib = CameraCalibration::from_vps(vp1, fit.vp2, size)?;
    let lambda = manual_scale(&calib, &markings.d1)?;
    Ok((calib.with_scale(lambda), fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_lines_meet_exactly() {
        let p = ImagePoint::new(100.0, 50.0);
        let l1 = Line2::through(p, ImagePoint::new(0.0, 0.0)).unwrap();
        let l2 = Line2::through(p, ImagePoint::new(100.0, 400.0)).unwrap();
        let v = vp_least_squares(&[l1, l2]).unwrap();
        assert!(v.distance(p) < 1e-9);
    }

    #[test]
    fn concurrent_bundle() {
        let p = ImagePoint::new(-320.0, -900.0);
        let lines: Vec<Line2> = (0..5)
            .map(|i| Line2::from_point_dir(p, ImagePoint::new(0.2 * i as f64 - 0.4, 1.0)).unwrap())
            .collect();
        let v = vp_least_squares(&lines).unwrap();
        assert!(lines.iter().all(|l| l.distance(v) < 1e-9));
    }

    #[test]
    fn parallel_lines_fail() {
        let l1 = Line2::new(0.0, 1.0, 3.0).unwrap();
        let l2 = Line2::new(0.0, 1.0, -3.0).unwrap();
        assert!(matches!(vp_least_squares(&[l1, l2]), Err(Error::ParallelLines)));
    }

    #[test]
    fn speed_scale_examples() {
        assert_eq!(speed_scale(&[(80.0, 80.0), (60.0, 60.0)]).unwrap(), 1.0);
        assert_eq!(speed_scale(&[(160.0, 80.0), (120.0, 60.0)]).unwrap(), 0.5);
        assert!(matches!(speed_scale(&[]), Err(Error::EmptyMatches)));
    }
}
