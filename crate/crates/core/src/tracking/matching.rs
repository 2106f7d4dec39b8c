//! Matching tracks to ground-truth passes at a measurement line.

use serde::{Deserialize, Serialize};

use crate::geometry::{ImagePoint, Line2};

/// Largest crossing-time difference of a match, in seconds.
pub const MAX_TIME_DIFFERENCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPass {
    pub vehicle_id: u64,
    pub lane: usize,
    /// Time the reference point crosses the measurement line, seconds.
    pub t: f64,
    pub speed_kmh: f64,
}

/// Image measurement line with lane extents along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneGeometry {
    pub start: ImagePoint,
    pub end: ImagePoint,
    /// Increasing positions along `start → end` (0 at start, 1 at end)
    /// separating the lanes; `n + 1` values for `n` lanes.
    pub boundaries: Vec<f64>,
}

impl LaneGeometry {
    pub fn line(&self) -> Line2 {
        Line2::through(self.start, self.end).expect("measurement line endpoints differ")
    }

    pub fn position(&self, p: ImagePoint) -> f64 {
        let d = self.end - self.start;
        (p - self.start).dot(d) / d.dot(d)
    }

    pub fn lane_of(&self, p: ImagePoint) -> Option<usize> {
        let s = self.position(p);
        self.boundaries.windows(2).position(|w| s >= w[0] && s < w[1])
    }

    /// First crossing of a time-ordered point sequence, linearly interpolated.
    pub fn crossing(&self, points: &[(f64, ImagePoint)]) -> Option<(f64, ImagePoint)> {
        let line = self.line();
        points.windows(2).find_map(|w| {
            let (d0, d1) = (line.signed_distance(w[0].1), line.signed_distance(w[1].1));
            if d0 == 0.0 {
                return Some(w[0]);
            }
            if (d0 < 0.0) != (d1 < 0.0) || d1 == 0.0 {
                let r = d0 / (d0 - d1);
                let t = w[0].0 + (w[1].0 - w[0].0) * r;
                let p = w[0].1 + (w[1].1 - w[0].1) * r;
                return Some((t, p));
            }
            None
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackCrossing {
    pub track_id: u64,
    pub lane: Option<usize>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingReport {
    /// `(track_id, vehicle_id)` pairs.
    pub matches: Vec<(u64, u64)>,
    pub crossings: usize,
    pub false_positives: usize,
    pub ground_truth: usize,
    pub minutes: f64,
    /// False positives per minute.
    pub fppm: f64,
    pub recall: f64,
}

/// One-to-one greedy matching by smallest time difference among pairs in
/// the same lane closer than [`MAX_TIME_DIFFERENCE`]. Every crossing left
/// unmatched is a false positive.
pub fn match_tracks_to_ground_truth(crossings: &[TrackCrossing], passes: &[GroundTruthPass], duration_s: f64) -> CountingReport {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, c) in crossings.iter().enumerate() {
        for (pi, p) in passes.iter().enumerate() {
            let dt = (c.t - p.t).abs();
            if c.lane == Some(p.lane) && dt < MAX_TIME_DIFFERENCE {
                pairs.push((dt, ci, pi));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(crossings[a.1].track_id.cmp(&crossings[b.1].track_id))
            .then(passes[a.2].vehicle_id.cmp(&passes[b.2].vehicle_id))
    });
    let mut used_c = vec![false; crossings.len()];
    let mut used_p = vec![false; passes.len()];
    let mut matches = Vec::new();
    for (_, ci, pi) in pairs {
        if used_c[ci] || used_p[pi] {
            continue;
        }
        used_c[ci] = true;
        used_p[pi] = true;
        matches.push((crossings[ci].track_id, passes[pi].vehicle_id));
    }
    matches.sort();
    let minutes = duration_s / 60.0;
    let false_positives = crossings.len() - matches.len();
    CountingReport {
        crossings: crossings.len(),
        false_positives,
        ground_truth: passes.len(),
        minutes,
        fppm: if minutes > 0.0 { false_positives as f64 / minutes } else { 0.0 },
        recall: if passes.is_empty() {
            0.0
        } else {
            matches.len() as f64 / passes.len() as f64
        },
        matches,
    }
}
