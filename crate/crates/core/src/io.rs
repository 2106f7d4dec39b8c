//! Interchange files and scene bundles on disk.
//!
//! Every JSON file carries a `version` string; JSON-lines files start with
//! a header line holding only the version. Image positions are written in
//! top-left pixel coordinates and converted to centered ones on load.
//! Writes go to a temporary sibling first and are renamed into place.
//!
//! A bundle directory holds:
//!
//! ```text
//! bundle.json          manifest: image size, frame rate, frames, measurement line
//! trajectories.jsonl   {track_id, frame, x, y}
//! detections.jsonl     {frame, t, bbox: [x, y, w, h], class, confidence, hull}
//! edgelets.jsonl       {frame, edgelets: [{x, y, dx, dy, quality}]}, optional
//! markings.json        lane lines, perpendicular lines, measured segments, optional
//! scene_truth.json     calibration, passes and noise-free markings, optional
//! frames/*.pgm         16-bit grayscale frames, optional
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::edgelets::Edgelet;
use crate::error::{Error, Result};
use crate::eval::SystemReport;
use crate::geometry::{BBox, ImagePoint, ImageSize};
use crate::manual::{GroundTruthMarking, MeasuredSegment};
use crate::pipeline::{EdgeletInput, SceneData, TrackingResult};
use crate::raster::RasterImage;
use crate::scale::ScaleRegression;
use crate::sim::SceneBundle;
use crate::tracking::{Detection, GroundTruthPass, LaneGeometry};
use crate::vp::TrajectoryPoint;

pub const BUNDLE_VERSION: &str = "autocalib-bundle/1";
pub const CALIBRATION_VERSION: &str = "autocalib-calibration/1";
pub const MARKINGS_VERSION: &str = "autocalib-markings/1";
pub const TRUTH_VERSION: &str = "autocalib-truth/1";
pub const TRAJECTORIES_VERSION: &str = "autocalib-trajectories/1";
pub const DETECTIONS_VERSION: &str = "autocalib-detections/1";
pub const TRACKS_VERSION: &str = "autocalib-tracks/1";
pub const EDGELETS_VERSION: &str = "autocalib-edgelets/1";
pub const REGRESSION_VERSION: &str = "autocalib-regression/1";
pub const REPORT_VERSION: &str = "autocalib-report/1";

pub const MANIFEST_FILE: &str = "bundle.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const EDGELETS_FILE: &str = "edgelets.jsonl";
pub const MARKINGS_FILE: &str = "markings.json";
pub const TRUTH_FILE: &str = "scene_truth.json";
pub const SCENE_FILE: &str = "scene.json";
pub const FRAMES_DIR: &str = "frames";

/// Largest relative disagreement between a stored focal length and the one
/// implied by the stored vanishing points.
const FOCAL_TOLERANCE: f64 = 1e-6;

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`. Readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?
        .to_string_lossy();
    let n = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = dir.join(format!(".{name}.{}.{n}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn check_version(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::format(path, format!("version {found:?}, expected {expected:?}")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: String,
}

/// Header line followed by one compact JSON record per line.
pub fn jsonl_string<T: Serialize>(version: &str, records: &[T]) -> Result<String> {
    let mut out = serde_json::to_string(&Header { version: version.into() })?;
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, version: &str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::format(path, "missing version header"))?;
    let header: Header = serde_json::from_str(first).map_err(|e| Error::format(path, format!("header: {e}")))?;
    check_version(path, &header.version, version)?;
    lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn top_left(p: ImagePoint, size: ImageSize) -> [f64; 2] {
    p.to_top_left(size)
}

fn centered(p: [f64; 2], size: ImageSize) -> ImagePoint {
    ImagePoint::from_top_left(p[0], p[1], size)
}

fn finite(path: &Path, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::format(path, "non-finite coordinate"))
    }
}

// ---- calibration -------------------------------------------------------

/// On-disk camera calibration. Positions are top-left pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub version: String,
    pub image_size: ImageSize,
    pub vp1: [f64; 2],
    pub vp2: [f64; 2],
    pub principal_point: [f64; 2],
    pub focal_px: f64,
    /// Meters per road-plane pseudo-unit; null when the scale is unknown.
    pub scale_m_per_unit: Option<f64>,
}

impl CalibrationFile {
    pub fn from_calibration(c: &CameraCalibration) -> Self {
        let s = c.image_size;
        let (cx, cy) = s.center();
        Self {
            version: CALIBRATION_VERSION.into(),
            image_size: s,
            vp1: top_left(c.vp1, s),
            vp2: top_left(c.vp2, s),
            principal_point: [cx, cy],
            focal_px: c.focal,
            scale_m_per_unit: c.scale,
        }
    }

    /// Rebuilds the calibration from the vanishing points; the stored focal
    /// length and principal point must agree with them.
    pub fn to_calibration(&self, path: &Path) -> Result<CameraCalibration> {
        check_version(path, &self.version, CALIBRATION_VERSION)?;
        finite(path, &[self.vp1[0], self.vp1[1], self.vp2[0], self.vp2[1], self.focal_px])?;
        let s = self.image_size;
        let (cx, cy) = s.center();
        if self.principal_point != [cx, cy] {
            return Err(Error::format(path, "principal point must be the image center"));
        }
        let c =
            CameraCalibration::from_vps(centered(self.vp1, s), centered(self.vp2, s), s).map_err(|e| Error::format(path, e.to_string()))?;
        if (c.focal - self.focal_px).abs() > FOCAL_TOLERANCE * c.focal {
            return Err(Error::format(
                path,
                format!("focal {} disagrees with the vanishing points ({})", self.focal_px, c.focal),
            ));
        }
        match self.scale_m_per_unit {
            Some(l) if !(l > 0.0 && l.is_finite()) => Err(Error::format(path, "scale must be positive")),
            Some(l) => Ok(c.with_scale(l)),
            None => Ok(c),
        }
    }
}

pub fn write_calibration(path: &Path, c: &CameraCalibration) -> Result<()> {
    write_json(path, &CalibrationFile::from_calibration(c))
}

pub fn read_calibration(path: &Path) -> Result<CameraCalibration> {
    read_json::<CalibrationFile>(path)?.to_calibration(path)
}

// ---- regression --------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionFile {
    pub version: String,
    pub alpha: f64,
    pub beta: f64,
}

pub fn write_regression(path: &Path, r: &ScaleRegression) -> Result<()> {
    write_json(
        path,
        &RegressionFile {
            version: REGRESSION_VERSION.into(),
            alpha: r.alpha,
            beta: r.beta,
        },
    )
}

pub fn read_regression(path: &Path) -> Result<ScaleRegression> {
    let f: RegressionFile = read_json(path)?;
    check_version(path, &f.version, REGRESSION_VERSION)?;
    finite(path, &[f.alpha, f.beta])?;
    Ok(ScaleRegression {
        alpha: f.alpha,
        beta: f.beta,
    })
}

// ---- markings ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub meters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkingsFile {
    pub version: String,
    pub image_size: ImageSize,
    /// Lines toward the first vanishing point.
    #[serde(default)]
    pub lane_lines: Vec<[[f64; 2]; 2]>,
    /// Lines toward the second vanishing point.
    #[serde(default)]
    pub perpendicular_lines: Vec<[[f64; 2]; 2]>,
    /// Measured segments along the traffic flow.
    #[serde(default)]
    pub d1: Vec<SegmentRecord>,
    /// Measured segments across it.
    #[serde(default)]
    pub d2: Vec<SegmentRecord>,
}

impl MarkingsFile {
    pub fn from_markings(m: &GroundTruthMarking, size: ImageSize) -> Self {
        let line = |l: &[ImagePoint; 2]| [top_left(l[0], size), top_left(l[1], size)];
        let seg = |s: &MeasuredSegment| SegmentRecord {
            p1: top_left(s.p1, size),
            p2: top_left(s.p2, size),
            meters: s.meters,
        };
        Self {
            version: MARKINGS_VERSION.into(),
            image_size: size,
            lane_lines: m.lane_lines.iter().map(line).collect(),
            perpendicular_lines: m.perpendicular_lines.iter().map(line).collect(),
            d1: m.d1.iter().map(seg).collect(),
            d2: m.d2.iter().map(seg).collect(),
        }
    }

    pub fn to_markings(&self, path: &Path) -> Result<GroundTruthMarking> {
        check_version(path, &self.version, MARKINGS_VERSION)?;
        let size = self.image_size;
        let line = |l: &[[f64; 2]; 2]| [centered(l[0], size), centered(l[1], size)];
        let seg = |s: &SegmentRecord| MeasuredSegment {
            p1: centered(s.p1, size),
            p2: centered(s.p2, size),
            meters: s.meters,
        };
        let m = GroundTruthMarking {
            lane_lines: self.lane_lines.iter().map(line).collect(),
            perpendicular_lines: self.perpendicular_lines.iter().map(line).collect(),
            d1: self.d1.iter().map(seg).collect(),
            d2: self.d2.iter().map(seg).collect(),
        };
        let coords: Vec<f64> = m
            .lane_lines
            .iter()
            .chain(&m.perpendicular_lines)
            .flat_map(|l| [l[0].x, l[0].y, l[1].x, l[1].y])
            .chain(m.segments().flat_map(|s| [s.p1.x, s.p1.y, s.p2.x, s.p2.y, s.meters]))
            .collect();
        finite(path, &coords)?;
        m.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(m)
    }
}

pub fn read_markings(path: &Path, size: ImageSize) -> Result<GroundTruthMarking> {
    let f: MarkingsFile = read_json(path)?;
    if f.image_size != size {
        return Err(Error::ConfigInvalid(format!(
            "{}: markings are for a {}x{} image, scene is {}x{}",
            path.display(),
            f.image_size.width,
            f.image_size.height,
            size.width,
            size.height
        )));
    }
    f.to_markings(path)
}

// ---- trajectories, detections, tracks -----------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub track_id: u64,
    pub frame: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame: u32,
    pub t: f64,
    /// `[x, y, w, h]` with `(x, y)` the top-left corner.
    pub bbox: [f64; 4],
    pub class: String,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hull: Option<Vec<[f64; 2]>>,
}

impl DetectionRecord {
    pub fn from_detection(d: &Detection, size: ImageSize) -> Self {
        Self {
            frame: d.frame,
            t: d.t,
            bbox: d.bbox.to_xywh_top_left(size),
            class: d.class.clone(),
            confidence: d.confidence,
            hull: d.hull.as_ref().map(|h| h.iter().map(|&p| top_left(p, size)).collect()),
        }
    }

    pub fn to_detection(&self, path: &Path, size: ImageSize) -> Result<Detection> {
        finite(path, &self.bbox)?;
        finite(path, &[self.t, self.confidence])?;
        if !(self.bbox[2] >= 0.0 && self.bbox[3] >= 0.0) {
            return Err(Error::format(path, "box with negative extent"));
        }
        let hull = match &self.hull {
            Some(h) => {
                finite(path, &h.iter().flatten().copied().collect::<Vec<_>>())?;
                Some(h.iter().map(|&p| centered(p, size)).collect())
            }
            None => None,
        };
        Ok(Detection {
            frame: self.frame,
            t: self.t,
            bbox: BBox::from_xywh_top_left(self.bbox, size),
            class: self.class.clone(),
            confidence: self.confidence,
            hull,
        })
    }
}

/// A tracked detection with its speed reference point, when one was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: u64,
    #[serde(flatten)]
    pub detection: DetectionRecord,
    pub reference: Option<[f64; 2]>,
}

pub fn trajectories_jsonl(points: &[TrajectoryPoint], size: ImageSize) -> Result<String> {
    let recs: Vec<TrajectoryRecord> = points
        .iter()
        .map(|p| {
            let [x, y] = top_left(p.point, size);
            TrajectoryRecord {
                track_id: p.track_id,
                frame: p.frame,
                x,
                y,
            }
        })
        .collect();
    jsonl_string(TRAJECTORIES_VERSION, &recs)
}

pub fn read_trajectories(path: &Path, size: ImageSize) -> Result<Vec<TrajectoryPoint>> {
    let recs: Vec<TrajectoryRecord> = read_jsonl(path, TRAJECTORIES_VERSION)?;
    recs.iter()
        .map(|r| {
            finite(path, &[r.x, r.y])?;
            Ok(TrajectoryPoint {
                track_id: r.track_id,
                frame: r.frame,
                point: centered([r.x, r.y], size),
            })
        })
        .collect()
}

pub fn detections_jsonl(detections: &[Detection], size: ImageSize) -> Result<String> {
    let recs: Vec<DetectionRecord> = detections.iter().map(|d| DetectionRecord::from_detection(d, size)).collect();
    jsonl_string(DETECTIONS_VERSION, &recs)
}

pub fn read_detections(path: &Path, size: ImageSize) -> Result<Vec<Detection>> {
    let recs: Vec<DetectionRecord> = read_jsonl(path, DETECTIONS_VERSION)?;
    recs.iter().map(|r| r.to_detection(path, size)).collect()
}

pub fn tracks_jsonl(tracking: &TrackingResult, size: ImageSize) -> Result<String> {
    let mut recs = Vec::new();
    for track in &tracking.tracks {
        let geometry = tracking.geometry.iter().find(|g| g.track_id == track.id);
        for d in &track.detections {
            let reference = geometry
                .and_then(|g| g.samples.iter().find(|s| s.0 == d.frame))
                .map(|s| top_left(s.3, size));
            recs.push(TrackRecord {
                track_id: track.id,
                detection: DetectionRecord::from_detection(d, size),
                reference,
            });
        }
    }
    jsonl_string(TRACKS_VERSION, &recs)
}

// ---- edgelets ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeletRecord {
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEdgelets {
    pub frame: u32,
    pub edgelets: Vec<EdgeletRecord>,
}

/// Raw edgelets of every frame; `frames[i]` labels `per_frame[i]`.
pub fn edgelets_jsonl(frames: &[u32], per_frame: &[Vec<Edgelet>], size: ImageSize) -> Result<String> {
    let recs: Vec<FrameEdgelets> = frames
        .iter()
        .zip(per_frame)
        .map(|(&frame, es)| FrameEdgelets {
            frame,
            edgelets: es
                .iter()
                .map(|e| {
                    let [x, y] = top_left(e.seed, size);
                    EdgeletRecord {
                        x,
                        y,
                        dx: e.direction.x,
                        dy: e.direction.y,
                        quality: e.quality,
                    }
                })
                .collect(),
        })
        .collect();
    jsonl_string(EDGELETS_VERSION, &recs)
}

pub fn read_edgelets(path: &Path, size: ImageSize) -> Result<Vec<Vec<Edgelet>>> {
    let recs: Vec<FrameEdgelets> = read_jsonl(path, EDGELETS_VERSION)?;
    recs.iter()
        .map(|f| {
            f.edgelets
                .iter()
                .map(|r| {
                    finite(path, &[r.x, r.y, r.dx, r.dy, r.quality])?;
                    if !(r.quality >= 1.0) || ((r.dx.hypot(r.dy)) - 1.0).abs() > 1e-6 {
                        return Err(Error::format(path, "edgelet needs a unit direction and quality >= 1"));
                    }
                    Ok(Edgelet {
                        seed: centered([r.x, r.y], size),
                        direction: ImagePoint::new(r.dx, r.dy),
                        quality: r.quality,
                    })
                })
                .collect()
        })
        .collect()
}

// ---- bundle ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRef {
    pub frame: u32,
    /// Relative to the bundle directory.
    pub path: String,
}

/// Measurement line with lane boundaries along it, top-left coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementLine {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub boundaries: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub version: String,
    pub image_size: ImageSize,
    pub fps: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub frames: Vec<FrameRef>,
    #[serde(default)]
    pub measurement_line: Option<MeasurementLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub version: String,
    pub seed: u64,
    pub calibration: CalibrationFile,
    pub passes: Vec<GroundTruthPass>,
    /// Noise-free markings.
    pub markings: MarkingsFile,
}

/// Ground truth read back from a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleTruth {
    pub calibration: CameraCalibration,
    pub passes: Vec<GroundTruthPass>,
    pub markings: GroundTruthMarking,
}

/// A scene bundle loaded from disk.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    pub trajectories: Vec<TrajectoryPoint>,
    pub detections: Vec<Detection>,
    pub markings: Option<GroundTruthMarking>,
    pub edgelets: Option<Vec<Vec<Edgelet>>>,
    pub truth: Option<BundleTruth>,
}

fn optional(path: PathBuf) -> Option<PathBuf> {
    path.is_file().then_some(path)
}

impl Bundle {
    pub fn read(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.is_file() {
            return Err(Error::ConfigInvalid(format!("{} has no {MANIFEST_FILE}", dir.display())));
        }
        let manifest: BundleManifest = read_json(&manifest_path)?;
        check_version(&manifest_path, &manifest.version, BUNDLE_VERSION)?;
        if !(manifest.fps > 0.0 && manifest.duration_s > 0.0) {
            return Err(Error::format(&manifest_path, "fps and duration must be positive"));
        }
        let size = manifest.image_size;
        if let Some(l) = &manifest.measurement_line {
            finite(&manifest_path, &[l.start[0], l.start[1], l.end[0], l.end[1]])?;
            if l.start == l.end || l.boundaries.len() < 2 || l.boundaries.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::format(
                    &manifest_path,
                    "measurement line needs distinct ends and increasing boundaries",
                ));
            }
        }
        let trajectories = match optional(dir.join(TRAJECTORIES_FILE)) {
            Some(p) => read_trajectories(&p, size)?,
            None => Vec::new(),
        };
        let detections = match optional(dir.join(DETECTIONS_FILE)) {
            Some(p) => read_detections(&p, size)?,
            None => Vec::new(),
        };
        let markings = optional(dir.join(MARKINGS_FILE)).map(|p| read_markings(&p, size)).transpose()?;
        let edgelets = optional(dir.join(EDGELETS_FILE)).map(|p| read_edgelets(&p, size)).transpose()?;
        let truth = match optional(dir.join(TRUTH_FILE)) {
            Some(p) => {
                let f: TruthFile = read_json(&p)?;
                check_version(&p, &f.version, TRUTH_VERSION)?;
                let calibration = f.calibration.to_calibration(&p)?;
                if calibration.image_size != size || f.markings.image_size != size {
                    return Err(Error::ConfigInvalid(format!("{}: image size differs from the bundle", p.display())));
                }
                Some(BundleTruth {
                    calibration,
                    passes: f.passes,
                    markings: f.markings.to_markings(&p)?,
                })
            }
            None => None,
        };
        for f in &manifest.frames {
            if !dir.join(&f.path).is_file() {
                return Err(Error::format(&manifest_path, format!("frame file {} is missing", f.path)));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            trajectories,
            detections,
            markings,
            edgelets,
            truth,
        })
    }

    pub fn image_size(&self) -> ImageSize {
        self.manifest.image_size
    }

    pub fn frame_path(&self, i: usize) -> PathBuf {
        self.dir.join(&self.manifest.frames[i].path)
    }

    /// Reads frame `i`, checking its dimensions against the manifest.
    pub fn read_frame(&self, i: usize) -> Result<RasterImage> {
        let path = self.frame_path(i);
        let img = RasterImage::read(&path)?;
        let s = self.image_size();
        if img.width() != s.width as usize || img.height() != s.height as usize {
            return Err(Error::format(&path, "frame size differs from the manifest"));
        }
        Ok(img)
    }

    pub fn lanes(&self) -> Option<LaneGeometry> {
        let s = self.image_size();
        self.manifest.measurement_line.as_ref().map(|l| LaneGeometry {
            start: centered(l.start, s),
            end: centered(l.end, s),
            boundaries: l.boundaries.clone(),
        })
    }

    /// Pipeline inputs. Frames win over stored edgelets when both exist.
    pub fn scene_data(&self) -> SceneData<'_> {
        let edgelets = if self.manifest.frames.is_empty() {
            EdgeletInput::PerFrame(self.edgelets.clone().unwrap_or_default())
        } else {
            EdgeletInput::Frames {
                count: self.manifest.frames.len(),
                frame: Box::new(move |i| self.read_frame(i)),
            }
        };
        SceneData {
            image_size: self.image_size(),
            duration_s: self.manifest.duration_s,
            trajectories: self.trajectories.clone(),
            detections: self.detections.clone(),
            edgelets,
            markings: self.markings.clone(),
            lanes: self.lanes(),
            passes: self.truth.as_ref().map(|t| t.passes.clone()).unwrap_or_default(),
            oracle: self.truth.as_ref().map(|t| t.calibration),
        }
    }
}

fn frame_file(frame: u32) -> String {
    format!("{FRAMES_DIR}/frame_{frame:06}.pgm")
}

/// Writes a simulated scene as a bundle directory, frames included.
pub fn write_scene_bundle(b: &SceneBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(FRAMES_DIR))?;
    let size = b.config.image;
    let lanes = &b.truth.lane_geometry;
    let manifest = BundleManifest {
        version: BUNDLE_VERSION.into(),
        image_size: size,
        fps: b.config.fps,
        duration_s: b.config.duration_s,
        seed: Some(b.seed),
        frames: b
            .rendered_frames
            .iter()
            .map(|&frame| FrameRef {
                frame,
                path: frame_file(frame),
            })
            .collect(),
        measurement_line: Some(MeasurementLine {
            start: top_left(lanes.start, size),
            end: top_left(lanes.end, size),
            boundaries: lanes.boundaries.clone(),
        }),
    };
    b.rendered_frames
        .par_iter()
        .try_for_each(|&f| write_atomic(&dir.join(frame_file(f)), &b.render_frame(f).pgm_bytes(16)))?;
    write_json(&dir.join(SCENE_FILE), &b.config)?;
    write_atomic(&dir.join(TRAJECTORIES_FILE), trajectories_jsonl(&b.trajectories, size)?.as_bytes())?;
    write_atomic(&dir.join(DETECTIONS_FILE), detections_jsonl(&b.detections, size)?.as_bytes())?;
    write_json(&dir.join(MARKINGS_FILE), &MarkingsFile::from_markings(&b.markings, size))?;
    write_json(
        &dir.join(TRUTH_FILE),
        &TruthFile {
            version: TRUTH_VERSION.into(),
            seed: b.seed,
            calibration: CalibrationFile::from_calibration(&b.truth.calibration),
            passes: b.truth.passes.clone(),
            markings: MarkingsFile::from_markings(&b.truth.markings, size),
        },
    )?;
    // The manifest goes last: a directory with a manifest is complete.
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

// ---- evaluation report -------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReportFile<'a> {
    pub version: &'static str,
    pub systems: &'a std::collections::BTreeMap<String, SystemReport>,
}

pub fn write_report(path: &Path, systems: &std::collections::BTreeMap<String, SystemReport>) -> Result<()> {
    write_json(
        path,
        &ReportFile {
            version: REPORT_VERSION,
            systems,
        },
    )
}
