//! Error metrics for calibration, distance and speed measurement.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::error::{Error, Result};
use crate::manual::{GroundTruthMarking, MeasuredSegment};
use crate::speed::SpeedMeasurement;
use crate::tracking::GroundTruthPass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
}

impl Stats {
    /// Mean, median (average of the middle pair for even counts) and
    /// nearest-rank 99th percentile.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            p99: v[nearest_rank(n, 0.99)],
        })
    }
}

/// Zero-based index of the nearest-rank percentile `q ∈ (0, 1]`.
pub fn nearest_rank(n: usize, q: f64) -> usize {
    ((q * n as f64).ceil() as usize).clamp(1, n) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub abs: Stats,
    /// Percent of the ground truth; absent when some ground truth is not positive.
    pub rel: Option<Stats>,
    pub count: usize,
}

impl ErrorSummary {
    /// Summary of `|estimate − gt|` over `(estimate, gt)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let abs: Vec<f64> = pairs.iter().map(|&(e, g)| (e - g).abs()).collect();
        let abs = Stats::of(&abs).ok_or(Error::EmptyMatches)?;
        let rel = if pairs.iter().all(|&(_, g)| g > 0.0) {
            let r: Vec<f64> = pairs.iter().map(|&(e, g)| (e - g).abs() / g * 100.0).collect();
            Stats::of(&r)
        } else {
            None
        };
        Ok(Self {
            abs,
            rel,
            count: pairs.len(),
        })
    }
}

/// `(measured, gt)` distance ratios for every (flow segment, perpendicular segment) pair.
pub fn ratio_pairs(calib: &CameraCalibration, markings: &GroundTruthMarking) -> Result<Vec<(f64, f64)>> {
    if markings.d1.is_empty() || markings.d2.is_empty() {
        return Err(Error::EmptyMarkings);
    }
    let p = |s: &MeasuredSegment| calib.pseudo_distance(s.p1, s.p2);
    let d2: Vec<f64> = markings.d2.iter().map(p).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(markings.d1.len() * d2.len());
    for s1 in &markings.d1 {
        let l1 = p(s1)?;
        for (s2, l2) in markings.d2.iter().zip(&d2) {
            out.push((l1 / l2, s1.meters / s2.meters));
        }
    }
    Ok(out)
}

/// Scale-free calibration error from ratios of measured distances.
pub fn ratio_error(calib: &CameraCalibration, markings: &GroundTruthMarking) -> Result<ErrorSummary> {
    ErrorSummary::from_pairs(&ratio_pairs(calib, markings)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceFilter {
    /// Only segments along the traffic flow.
    Flow,
    All,
}

pub fn distance_error(calib: &CameraCalibration, markings: &GroundTruthMarking, filter: DistanceFilter) -> Result<ErrorSummary> {
    let segments: Vec<&MeasuredSegment> = match filter {
        DistanceFilter::Flow => markings.d1.iter().collect(),
        DistanceFilter::All => markings.segments().collect(),
    };
    if segments.is_empty() {
        return Err(Error::EmptyMarkings);
    }
    let pairs: Vec<(f64, f64)> = segments
        .iter()
        .map(|s| Ok((calib.ground_distance(s.p1, s.p2)?, s.meters)))
        .collect::<Result<_>>()?;
    ErrorSummary::from_pairs(&pairs)
}

pub const HISTOGRAM_BIN_KMH: f64 = 0.1;

/// `(threshold, fraction of errors ≤ threshold)` from 0 up to the first bin
/// covering every error.
pub fn cumulative_histogram(errors: &[f64], bin: f64) -> Vec<(f64, f64)> {
    if errors.is_empty() {
        return Vec::new();
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let thr = k as f64 * bin;
        let count = v.partition_point(|&e| e <= thr);
        out.push((thr, count as f64 / n));
        if count == v.len() {
            return out;
        }
        k += 1;
    }
}

pub fn histogram_csv(hist: &[(f64, f64)]) -> String {
    let mut s = String::from("threshold_kmh,fraction\n");
    for (t, f) in hist {
        let _ = writeln!(s, "{t:.1},{f}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedErrorReport {
    pub summary: ErrorSummary,
    pub histogram: Vec<(f64, f64)>,
    /// `(track_id, vehicle_id, measured, gt)` per matched vehicle.
    pub pairs: Vec<(u64, u64, f64, f64)>,
}

/// Speed errors of matched `(track_id, vehicle_id)` pairs.
pub fn speed_error(measurements: &[SpeedMeasurement], passes: &[GroundTruthPass], matches: &[(u64, u64)]) -> Result<SpeedErrorReport> {
    let by_track: BTreeMap<u64, &SpeedMeasurement> = measurements.iter().map(|m| (m.track_id, m)).collect();
    let by_vehicle: BTreeMap<u64, &GroundTruthPass> = passes.iter().map(|p| (p.vehicle_id, p)).collect();
    let pairs: Vec<(u64, u64, f64, f64)> = matches
        .iter()
        .filter_map(|&(t, v)| Some((t, v, by_track.get(&t)?.speed_kmh, by_vehicle.get(&v)?.speed_kmh)))
        .collect();
    let ev: Vec<(f64, f64)> = pairs.iter().map(|p| (p.2, p.3)).collect();
    let summary = ErrorSummary::from_pairs(&ev)?;
    let abs: Vec<f64> = ev.iter().map(|&(e, g)| (e - g).abs()).collect();
    Ok(SpeedErrorReport {
        summary,
        histogram: cumulative_histogram(&abs, HISTOGRAM_BIN_KMH),
        pairs,
    })
}

/// One row of an evaluation report.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SystemReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<ErrorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_flow: Option<ErrorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_all: Option<ErrorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed: Option<ErrorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counting: Option<crate::tracking::CountingReport>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_small_arrays() {
        assert_eq!(Stats::of(&[3.0]).unwrap().p99, 3.0);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(Stats::of(&v).unwrap().p99, 99.0);
        let v: Vec<f64> = (1..=101).map(f64::from).collect();
        assert_eq!(Stats::of(&v).unwrap().p99, 100.0);
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(Stats::of(&v).unwrap().p99, 10.0);
    }

    #[test]
    fn constant_bias() {
        let p: Vec<(f64, f64)> = [60.0, 80.0, 100.0, 120.0].iter().map(|&g| (g + 1.0, g)).collect();
        let s = ErrorSummary::from_pairs(&p).unwrap();
        assert_eq!(s.abs.mean, 1.0);
        assert_eq!(s.abs.median, 1.0);
    }

    #[test]
    fn perfect_histogram_jumps_at_zero() {
        let h = cumulative_histogram(&[0.0, 0.0, 0.0], HISTOGRAM_BIN_KMH);
        assert_eq!(h, vec![(0.0, 1.0)]);
        let h = cumulative_histogram(&[0.05, 0.25], HISTOGRAM_BIN_KMH);
        assert_eq!(h.last().unwrap().1, 1.0);
        assert!(h.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn empty_pairs() {
        assert!(matches!(ErrorSummary::from_pairs(&[]), Err(Error::EmptyMatches)));
    }
}
