//! End-to-end processing of one scene: calibration, tracking, scale and speeds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::edgelets::{collect_edgelets, frame_edgelets, Edgelet, EdgeletCollector, EdgeletOptions};
use crate::error::{Error, Result};
use crate::eval::{distance_error, ratio_error, speed_error, DistanceFilter, SpeedErrorReport, SystemReport};
use crate::geometry::ImageSize;
use crate::manual::{manual_calibration, manual_scale, speed_scale, GridOptions, GroundTruthMarking, SecondVpFit};
use crate::raster::RasterImage;
use crate::scale::{infer_scale, scale_instances, ScaleEstimate, ScaleOptions, ScaleRegression};
use crate::sim::SceneBundle;
use crate::speed::{measure_speed, SpeedMeasurement, DEFAULT_TAU};
use crate::tracking::matching::TrackCrossing;
use crate::tracking::{
    group_and_filter, match_tracks_to_ground_truth, track_boxes, track_geometry, CountingReport, Detection, GroundTruthPass, LaneGeometry,
    Track, TrackGeometry, TrackerParams,
};
use crate::vp::{estimate_first_vp, estimate_second_vp, segments_from_points, CalibrationDiagnostics, TrajectoryPoint, VpOptions};
use crate::wireframe::WireframeModel;

/// Observations per trajectory segment.
pub const SEGMENT_CHUNK: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibSource {
    Auto,
    Manual,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleSource {
    Bbox,
    #[serde(rename = "bbox+reg")]
    BboxReg,
    Manual,
    Speed,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub vp: VpOptions,
    pub edgelets: EdgeletOptions,
    pub tracker: TrackerParams,
    pub scale: ScaleOptions,
    pub grid: GridOptions,
    pub tau: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            vp: VpOptions::default(),
            edgelets: EdgeletOptions::default(),
            tracker: TrackerParams::default(),
            scale: ScaleOptions::default(),
            grid: GridOptions::default(),
            tau: DEFAULT_TAU,
        }
    }
}

type FrameFn<'a> = Box<dyn Fn(usize) -> Result<RasterImage> + Sync + 'a>;

/// Where the edge observations for the second VP come from.
pub enum EdgeletInput<'a> {
    Frames {
        count: usize,
        frame: FrameFn<'a>,
    },
    /// Raw per-frame edgelets, before the first-VP exclusion and selection.
    PerFrame(Vec<Vec<Edgelet>>),
}

/// Inputs of one scene, independent of where they were loaded from.
pub struct SceneData<'a> {
    pub image_size: ImageSize,
    pub duration_s: f64,
    pub trajectories: Vec<TrajectoryPoint>,
    pub detections: Vec<Detection>,
    pub edgelets: EdgeletInput<'a>,
    pub markings: Option<GroundTruthMarking>,
    pub lanes: Option<LaneGeometry>,
    pub passes: Vec<GroundTruthPass>,
    pub oracle: Option<CameraCalibration>,
}

impl<'a> SceneData<'a> {
    pub fn from_bundle(b: &'a SceneBundle) -> Self {
        let frames = b.rendered_frames.clone();
        Self {
            image_size: b.config.image,
            duration_s: b.config.duration_s,
            trajectories: b.trajectories.clone(),
            detections: b.detections.clone(),
            edgelets: EdgeletInput::Frames {
                count: frames.len(),
                frame: Box::new(move |i| Ok(b.render_frame(frames[i]))),
            },
            markings: Some(b.markings.clone()),
            lanes: Some(b.truth.lane_geometry.clone()),
            passes: b.truth.passes.clone(),
            oracle: Some(b.truth.calibration),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    /// Scale-free unless the source provides one.
    pub calibration: CameraCalibration,
    pub diagnostics: Option<CalibrationDiagnostics>,
    pub manual_fit: Option<SecondVpFit>,
}

/// Unfiltered edgelets of every frame, in frame order.
pub fn per_frame_edgelets(input: &EdgeletInput<'_>, opts: &EdgeletOptions) -> Result<Vec<Vec<Edgelet>>> {
    match input {
        EdgeletInput::Frames { count, frame } => (0..*count)
            .into_par_iter()
            .map(|i| frame(i).map(|img| frame_edgelets(&img, opts.seed_threshold_rel)))
            .collect(),
        EdgeletInput::PerFrame(frames) => Ok(frames.clone()),
    }
}

/// Edgelets pooled over the scene for a known first VP.
pub fn scene_edgelets(input: &EdgeletInput<'_>, vp1: crate::geometry::ImagePoint, opts: &EdgeletOptions) -> Result<Vec<Edgelet>> {
    match input {
        EdgeletInput::Frames { count, frame } => collect_edgelets(*count, frame, vp1, *opts),
        EdgeletInput::PerFrame(frames) => {
            let mut c = EdgeletCollector::new(vp1, *opts);
            for f in frames {
                c.push_edgelets(f.clone());
            }
            Ok(c.finish())
        }
    }
}

pub fn calibrate_scene(data: &SceneData<'_>, source: CalibSource, opts: &PipelineOptions) -> Result<CalibrationResult> {
    match source {
        CalibSource::Auto => {
            let segments = segments_from_points(&data.trajectories, SEGMENT_CHUNK);
            let vp1 = estimate_first_vp(&segments, data.image_size, &opts.vp)?;
            let edgelets = scene_edgelets(&data.edgelets, vp1.point, &opts.edgelets)?;
            let vp2 = estimate_second_vp(&edgelets, vp1.point, data.image_size, &opts.vp)?;
            let calibration = CameraCalibration::from_vps(vp1.point, vp2.point, data.image_size)?;
            Ok(CalibrationResult {
                calibration,
                diagnostics: Some(CalibrationDiagnostics {
                    vp1,
                    vp2,
                    segments: segments.len(),
                    edgelets: edgelets.len(),
                }),
                manual_fit: None,
            })
        }
        CalibSource::Manual => {
            let markings = data.markings.as_ref().ok_or(Error::EmptyMarkings)?;
            let (calibration, fit) = manual_calibration(markings, data.image_size, &opts.grid)?;
            Ok(CalibrationResult {
                calibration,
                diagnostics: None,
                manual_fit: Some(fit),
            })
        }
        CalibSource::Oracle => Ok(CalibrationResult {
            calibration: data
                .oracle
                .ok_or_else(|| Error::InvalidInput("scene has no oracle calibration".into()))?,
            diagnostics: None,
            manual_fit: None,
        }),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackingResult {
    pub tracks: Vec<Track>,
    pub geometry: Vec<TrackGeometry>,
}

impl TrackingResult {
    pub fn pairs(&self) -> impl Iterator<Item = (&Track, &TrackGeometry)> {
        self.tracks
            .iter()
            .filter_map(|t| self.geometry.iter().find(|g| g.track_id == t.id).map(|g| (t, g)))
    }
}

/// Tracks with their 3D boxes; tracks whose boxes cannot be built are dropped.
pub fn track_scene(detections: &[Detection], calib: &CameraCalibration, params: &TrackerParams) -> TrackingResult {
    let filtered = group_and_filter(detections, params.occlusion_threshold);
    let tracks = track_boxes(&filtered, params);
    let geometry: Vec<TrackGeometry> = tracks
        .par_iter()
        .filter_map(|t| track_geometry(t, calib).ok())
        .filter(|g| !g.samples.is_empty())
        .collect();
    let keep: std::collections::BTreeSet<u64> = geometry.iter().map(|g| g.track_id).collect();
    TrackingResult {
        tracks: tracks.into_iter().filter(|t| keep.contains(&t.id)).collect(),
        geometry,
    }
}

/// Crossing of every track's reference points with the measurement line.
pub fn track_crossings(geometry: &[TrackGeometry], lanes: &LaneGeometry) -> Vec<TrackCrossing> {
    geometry
        .iter()
        .filter_map(|g| {
            let (t, p) = lanes.crossing(&g.reference_points())?;
            Some(TrackCrossing {
                track_id: g.track_id,
                lane: lanes.lane_of(p),
                t,
            })
        })
        .collect()
}

/// Speeds of every track long enough to measure; lanes from the crossings.
pub fn measure_tracks(
    geometry: &[TrackGeometry],
    calib: &CameraCalibration,
    tau: usize,
    crossings: &[TrackCrossing],
) -> Vec<SpeedMeasurement> {
    let lanes: BTreeMap<u64, Option<usize>> = crossings.iter().map(|c| (c.track_id, c.lane)).collect();
    geometry
        .par_iter()
        .filter_map(|g| {
            let mut m = measure_speed(g.track_id, &g.reference_points(), calib, tau).ok()?;
            m.lane = lanes.get(&g.track_id).copied().flatten();
            Some(m)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleResult {
    pub lambda: f64,
    pub source: ScaleSource,
    pub estimate: Option<ScaleEstimate>,
}

pub struct ScaleContext<'a> {
    pub models: &'a BTreeMap<String, WireframeModel>,
    pub regression: Option<ScaleRegression>,
}

pub fn scene_scale(
    data: &SceneData<'_>,
    calib: &CalibrationResult,
    tracking: &TrackingResult,
    source: ScaleSource,
    ctx: &ScaleContext<'_>,
    opts: &PipelineOptions,
) -> Result<ScaleResult> {
    let c = calib.calibration.without_scale();
    let (lambda, estimate) = match source {
        ScaleSource::Bbox | ScaleSource::BboxReg => {
            let regression = match source {
                ScaleSource::BboxReg => Some(
                    ctx.regression
                        .ok_or_else(|| Error::ConfigInvalid("scale source bbox+reg needs a regression".into()))?,
                ),
                _ => None,
            };
            let tracks: Vec<Track> = tracking.pairs().map(|p| p.0.clone()).collect();
            let geoms: Vec<TrackGeometry> = tracking.pairs().map(|p| p.1.clone()).collect();
            let inst = scale_instances(&tracks, &geoms);
            let est = infer_scale(&inst, ctx.models, &c, regression, &opts.scale)?;
            (est.best(), Some(est))
        }
        ScaleSource::Manual => {
            let m = data.markings.as_ref().ok_or(Error::EmptyMarkings)?;
            (manual_scale(&c, &m.d1)?, None)
        }
        ScaleSource::Speed => {
            let lanes = data.lanes.as_ref().ok_or(Error::EmptyMatches)?;
            let unit = c.with_scale(1.0);
            let crossings = track_crossings(&tracking.geometry, lanes);
            let speeds = measure_tracks(&tracking.geometry, &unit, opts.tau, &crossings);
            let report = match_tracks_to_ground_truth(&crossings, &data.passes, data.duration_s);
            let by_track: BTreeMap<u64, f64> = speeds.iter().map(|m| (m.track_id, m.speed_kmh)).collect();
            let by_vehicle: BTreeMap<u64, f64> = data.passes.iter().map(|p| (p.vehicle_id, p.speed_kmh)).collect();
            let pairs: Vec<(f64, f64)> = report
                .matches
                .iter()
                .filter_map(|(t, v)| Some((*by_track.get(t)?, *by_vehicle.get(v)?)))
                .collect();
            (speed_scale(&pairs)?, None)
        }
        ScaleSource::Oracle => (
            data.oracle
                .and_then(|o| o.scale)
                .ok_or_else(|| Error::InvalidInput("scene has no oracle scale".into()))?,
            None,
        ),
    };
    Ok(ScaleResult { lambda, source, estimate })
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurementResult {
    pub speeds: Vec<SpeedMeasurement>,
    pub crossings: Vec<TrackCrossing>,
    pub counting: Option<CountingReport>,
    pub speed_error: Option<SpeedErrorReport>,
}

/// Speeds with a scaled calibration, plus counting and speed errors when
/// lanes and ground truth are known.
pub fn measure_scene(data: &SceneData<'_>, calib: &CameraCalibration, tracking: &TrackingResult, tau: usize) -> MeasurementResult {
    let crossings = data
        .lanes
        .as_ref()
        .map(|l| track_crossings(&tracking.geometry, l))
        .unwrap_or_default();
    let speeds = measure_tracks(&tracking.geometry, calib, tau, &crossings);
    let counting = data
        .lanes
        .as_ref()
        .filter(|_| !data.passes.is_empty())
        .map(|_| match_tracks_to_ground_truth(&crossings, &data.passes, data.duration_s));
    let speed_error = counting.as_ref().and_then(|c| speed_error(&speeds, &data.passes, &c.matches).ok());
    MeasurementResult {
        speeds,
        crossings,
        counting,
        speed_error,
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub calibration: CalibrationResult,
    pub scale: ScaleResult,
    pub tracking: TrackingResult,
    pub measurement: MeasurementResult,
}

impl RunResult {
    pub fn scaled_calibration(&self) -> CameraCalibration {
        self.calibration.calibration.with_scale(self.scale.lambda)
    }
}

pub fn run_scene(
    data: &SceneData<'_>,
    calib_source: CalibSource,
    scale_source: ScaleSource,
    ctx: &ScaleContext<'_>,
    opts: &PipelineOptions,
) -> Result<RunResult> {
    let calibration = calibrate_scene(data, calib_source, opts)?;
    let tracking = track_scene(&data.detections, &calibration.calibration, &opts.tracker);
    let scale = scene_scale(data, &calibration, &tracking, scale_source, ctx, opts)?;
    let scaled = calibration.calibration.with_scale(scale.lambda);
    let measurement = measure_scene(data, &scaled, &tracking, opts.tau);
    Ok(RunResult {
        calibration,
        scale,
        tracking,
        measurement,
    })
}

/// The built-in wireframe models keyed by class.
pub fn builtin_models() -> BTreeMap<String, WireframeModel> {
    [WireframeModel::combi(), WireframeModel::sedan()]
        .into_iter()
        .map(|m| (m.id.clone(), m))
        .collect()
}

/// Report row for one calibrated system. Metrics whose inputs are missing
/// are left out; distances need a scale.
pub fn evaluate_system(calib: &CameraCalibration, markings: Option<&GroundTruthMarking>, m: &MeasurementResult) -> SystemReport {
    let scaled = calib.scale.is_some();
    SystemReport {
        ratio: markings.and_then(|mk| ratio_error(calib, mk).ok()),
        distance_flow: markings
            .filter(|_| scaled)
            .and_then(|mk| distance_error(calib, mk, DistanceFilter::Flow).ok()),
        distance_all: markings
            .filter(|_| scaled)
            .and_then(|mk| distance_error(calib, mk, DistanceFilter::All).ok()),
        speed: m.speed_error.as_ref().map(|r| r.summary),
        counting: m.counting.clone(),
    }
}
