//! Vehicle tracking: occlusion filtering, Kalman box tracking, 3D boxes and
//! reference points.

pub mod bbox3d;
pub mod hull;
pub mod kalman;
pub mod matching;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::error::Result;
use crate::geometry::{BBox, ImagePoint};

pub use bbox3d::{construct_3d_bbox, reference_point, BoundingBox3D, Travel};
pub use kalman::{BoxFilter, KalmanParams};
pub use matching::{match_tracks_to_ground_truth, CountingReport, GroundTruthPass, LaneGeometry};

/// Class label for vehicles without a fine-grained type.
pub const OTHER_CLASS: &str = "other";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    /// Seconds.
    pub t: f64,
    pub bbox: BBox,
    pub class: String,
    pub confidence: f64,
    pub hull: Option<Vec<ImagePoint>>,
}

impl Detection {
    fn measurement(&self) -> kalman::Measurement {
        let c = self.bbox.center();
        kalman::Measurement::new(c.x, c.y, self.bbox.width(), self.bbox.height())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    pub kalman: KalmanParams,
    /// Gate half-width in standard deviations of the predicted center.
    pub gate_sigmas: f64,
    /// A track ends after this many consecutive frames without a detection.
    pub max_missed: u32,
    pub min_detections: usize,
    /// Fraction of a box covered by a nearer box above which it is dropped.
    pub occlusion_threshold: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            kalman: KalmanParams::default(),
            gate_sigmas: 3.0,
            max_missed: 5,
            min_detections: 5,
            occlusion_threshold: 0.25,
        }
    }
}

/// Drops detections that are partly hidden behind a nearer detection of the
/// same frame. Nearer means a lower bottom edge in the image; the overlap is
/// measured as the fraction of the farther box covered by the nearer one.
pub fn group_and_filter(detections: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut by_frame: BTreeMap<u32, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(d);
    }
    let mut out = Vec::with_capacity(detections.len());
    for dets in by_frame.values() {
        for a in dets {
            let occluded = dets
                .iter()
                .any(|b| b.bbox.y1 > a.bbox.y1 && a.bbox.intersection_area(&b.bbox) > threshold * a.bbox.area());
            if !occluded {
                out.push((*a).clone());
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Track {
    pub id: u64,
    pub detections: Vec<Detection>,
    /// Filtered `[cx, cy, w, h, vx, vy]` after each detection.
    pub states: Vec<[f64; 6]>,
}

impl Track {
    /// Mean class probabilities over all detections. A detection with label
    /// `c` and confidence `p` contributes `p` to `c` and `1 - p` to "other".
    pub fn class_posterior(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, f64> = BTreeMap::new();
        for d in &self.detections {
            let p = d.confidence.clamp(0.0, 1.0);
            *acc.entry(d.class.clone()).or_default() += p;
            *acc.entry(OTHER_CLASS.to_string()).or_default() += 1.0 - p;
        }
        let n = self.detections.len().max(1) as f64;
        acc.values_mut().for_each(|v| *v /= n);
        acc
    }

    /// Most probable class; ties go to the lexicographically first label.
    pub fn class(&self) -> String {
        let mut best: Option<(String, f64)> = None;
        for (k, v) in self.class_posterior() {
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((k, v));
            }
        }
        best.map(|b| b.0).unwrap_or_else(|| OTHER_CLASS.to_string())
    }

    pub fn duration(&self) -> f64 {
        match (self.detections.first(), self.detections.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

struct LiveTrack {
    id: u64,
    filter: BoxFilter,
    detections: Vec<Detection>,
    states: Vec<[f64; 6]>,
}

/// Associates detections frame by frame with gated nearest-centroid
/// matching and constant-velocity Kalman prediction.
pub fn track_boxes(detections: &[Detection], params: &TrackerParams) -> Vec<Track> {
    let mut by_frame: BTreeMap<u32, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(d);
    }
    let mut live: Vec<LiveTrack> = Vec::new();
    let mut done: Vec<LiveTrack> = Vec::new();
    let mut next_id = 0u64;

    for (&frame, dets) in &by_frame {
        let frame_i = frame as i64;
        let (ended, active): (Vec<LiveTrack>, Vec<LiveTrack>) = live
            .into_iter()
            .partition(|t| frame_i - t.filter.last_frame() > params.max_missed as i64);
        done.extend(ended);
        live = active;

        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in live.iter().enumerate() {
            let (x, p) = t.filter.predicted(frame_i);
            let s = t.filter.innovation_covariance(&p);
            let (gx, gy) = (params.gate_sigmas * s[(0, 0)].sqrt(), params.gate_sigmas * s[(1, 1)].sqrt());
            for (di, d) in dets.iter().enumerate() {
                let c = d.bbox.center();
                let (ex, ey) = (c.x - x[0], c.y - x[1]);
                if ex.abs() <= gx && ey.abs() <= gy {
                    candidates.push((ex.hypot(ey), ti, di));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_used = vec![false; live.len()];
        let mut det_used = vec![false; dets.len()];
        for (_, ti, di) in candidates {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            let t = &mut live[ti];
            t.filter.update(dets[di].measurement(), frame_i);
            t.detections.push(dets[di].clone());
            t.states.push(t.filter.x.into());
        }
        for (di, d) in dets.iter().enumerate() {
            if det_used[di] {
                continue;
            }
            let filter = BoxFilter::new(d.measurement(), frame_i, params.kalman);
            live.push(LiveTrack {
                id: next_id,
                states: vec![filter.x.into()],
                filter,
                detections: vec![(*d).clone()],
            });
            next_id += 1;
        }
    }
    done.extend(live);
    let mut tracks: Vec<Track> = done
        .into_iter()
        .filter(|t| t.detections.len() >= params.min_detections)
        .map(|t| Track {
            id: t.id,
            detections: t.detections,
            states: t.states,
        })
        .collect();
    tracks.sort_by_key(|t| t.id);
    tracks
}

/// Per-detection 3D boxes and reference points of one track.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackGeometry {
    pub track_id: u64,
    pub travel: Travel,
    /// `(frame, t, box, reference point)` for every detection with a usable hull.
    pub samples: Vec<(u32, f64, BoundingBox3D, ImagePoint)>,
}

impl TrackGeometry {
    pub fn reference_points(&self) -> Vec<(f64, ImagePoint)> {
        self.samples.iter().map(|s| (s.1, s.3)).collect()
    }
}

/// Builds 3D boxes from the hulls of a track and places the reference
/// point on the front base edge according to the direction of travel.
pub fn track_geometry(track: &Track, calib: &CameraCalibration) -> Result<TrackGeometry> {
    let boxes: Vec<(u32, f64, BoundingBox3D)> = track
        .detections
        .iter()
        .filter_map(|d| {
            let hull = d.hull.as_ref()?;
            construct_3d_bbox(hull, calib).ok().map(|b| (d.frame, d.t, b))
        })
        .collect();
    let travel = travel_direction(&boxes.iter().map(|b| b.2).collect::<Vec<_>>(), calib)?;
    let samples = boxes
        .into_iter()
        .filter_map(|(f, t, b)| reference_point(&b, calib, travel).ok().map(|r| (f, t, b, r)))
        .collect();
    Ok(TrackGeometry {
        track_id: track.id,
        travel,
        samples,
    })
}

/// Sign of the base-center motion along the flow axis between the first
/// and last box.
pub fn travel_direction(boxes: &[BoundingBox3D], calib: &CameraCalibration) -> Result<Travel> {
    let flow = calib.rotation()?.column(0).into_owned();
    let along = |b: &BoundingBox3D| -> Option<f64> {
        let c = b.base_center().ok()?;
        calib.project_to_road(c).ok().map(|g| g.dot(&flow))
    };
    let first = boxes.iter().find_map(along);
    let last = boxes.iter().rev().find_map(along);
    Ok(match (first, last) {
        (Some(a), Some(b)) if b < a => Travel::AwayFromVp1,
        _ => Travel::TowardVp1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: u32, cx: f64, cy: f64) -> Detection {
        Detection {
            frame,
            t: frame as f64 / 25.0,
            bbox: BBox::new(cx - 20.0, cy - 15.0, cx + 20.0, cy + 15.0),
            class: "sedan".into(),
            confidence: 0.9,
            hull: None,
        }
    }

    #[test]
    fn disjoint_boxes_kept_and_contained_box_dropped() {
        let a = det(0, 0.0, 0.0);
        let b = det(0, 100.0, 0.0);
        assert_eq!(group_and_filter(&[a.clone(), b], 0.25).len(), 2);
        let mut big = det(0, 0.0, 5.0);
        big.bbox = BBox::new(-50.0, -40.0, 50.0, 40.0);
        let kept = group_and_filter(&[a, big.clone()], 0.25);
        assert_eq!(kept, vec![big]);
    }

    #[test]
    fn gap_of_three_frames_keeps_one_track() {
        let dets: Vec<Detection> = (0..20u32)
            .filter(|f| !(8..11).contains(f))
            .map(|f| det(f, 5.0 * f as f64, 2.0 * f as f64))
            .collect();
        let tracks = track_boxes(&dets, &TrackerParams::default());
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].detections.len(), 17);
    }

    #[test]
    fn parallel_vehicles_keep_identity() {
        let mut dets = Vec::new();
        for f in 0..40u32 {
            dets.push(det(f, 6.0 * f as f64, 0.0));
            dets.push(det(f, 6.0 * f as f64, 200.0));
        }
        let tracks = track_boxes(&dets, &TrackerParams::default());
        assert_eq!(tracks.len(), 2);
        for t in &tracks {
            let y0 = t.detections[0].bbox.center().y;
            assert!(t.detections.iter().all(|d| d.bbox.center().y == y0));
        }
    }

    #[test]
    fn short_tracks_dropped_and_long_gaps_split() {
        let dets: Vec<Detection> = (0..30u32)
            .filter(|f| !(10..16).contains(f))
            .map(|f| det(f, 5.0 * f as f64, 0.0))
            .collect();
        let tracks = track_boxes(&dets, &TrackerParams::default());
        assert_eq!(tracks.len(), 2);
        let short: Vec<Detection> = (0..4u32).map(|f| det(f, f as f64, 0.0)).collect();
        assert!(track_boxes(&short, &TrackerParams::default()).is_empty());
    }

    #[test]
    fn class_posterior_mean() {
        let mut a = det(0, 0.0, 0.0);
        a.confidence = 0.8;
        let mut b = det(1, 0.0, 0.0);
        b.class = "combi".into();
        b.confidence = 0.6;
        let t = Track {
            id: 0,
            detections: vec![a, b],
            states: vec![],
        };
        let p = t.class_posterior();
        assert!((p["sedan"] - 0.4).abs() < 1e-12);
        assert!((p["combi"] - 0.3).abs() < 1e-12);
        assert!((p["other"] - 0.3).abs() < 1e-12);
        assert_eq!(t.class(), "sedan");
    }
}
