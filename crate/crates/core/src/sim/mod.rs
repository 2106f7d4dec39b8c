//! Synthetic traffic scenes with exactly known camera, scale and speeds.
//!
//! World frame: Z up, the road runs along X, Y points to the left of the
//! +X direction. The camera stands at height `h` looking at the world
//! origin from a horizontal distance `h / tan(tilt)`, rotated by `pan`
//! about Z and by `roll` about its optical axis. One world meter is
//! `1 / h` pseudo-units, so the true scene scale equals the camera height.

pub mod render;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::error::{Error, Result};
use crate::geometry::{BBox, ImagePoint, ImageSize};
use crate::manual::{GroundTruthMarking, MeasuredSegment};
use crate::raster::RasterImage;
use crate::tracking::hull::convex_hull;
use crate::tracking::{Detection, GroundTruthPass, LaneGeometry};
use crate::vp::TrajectoryPoint;
use crate::wireframe::WireframeModel;

pub const SCENE_VERSION: &str = "autocalib-scene/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub focal_px: f64,
    pub tilt_deg: f64,
    pub pan_deg: f64,
    #[serde(default)]
    pub roll_deg: f64,
    pub height_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneSpec {
    pub count: usize,
    pub width_m: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    /// Built-in model id.
    pub model: String,
    /// True length; the model is scaled uniformly when it differs.
    #[serde(default)]
    pub length_m: Option<f64>,
    pub speed_kmh: f64,
    pub lane: usize,
    /// Time the vehicle enters the visible stretch, seconds.
    pub entry_s: f64,
    /// Drives toward the camera (against +X).
    #[serde(default)]
    pub oncoming: bool,
    /// When false, the vehicle is part of the ground truth but never detected.
    #[serde(default = "yes")]
    pub detected: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub trajectory_sigma_px: f64,
    /// Fraction of rendered edges that are random clutter.
    #[serde(default)]
    pub edge_outlier_fraction: f64,
    #[serde(default)]
    pub detection_jitter_px: f64,
    #[serde(default)]
    pub marking_sigma_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    /// Every `stride`-th frame is rendered.
    pub stride: u32,
    pub max_frames: usize,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self { stride: 5, max_frames: 40 }
    }
}

fn default_max_range() -> f64 {
    150.0
}

fn default_min_box() -> f64 {
    24.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub version: String,
    pub camera: CameraSpec,
    pub image: ImageSize,
    pub lanes: LaneSpec,
    pub vehicles: Vec<VehicleSpec>,
    /// Simulated like vehicles but absent from the ground truth.
    #[serde(default)]
    pub spurious: Vec<VehicleSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub fps: f64,
    pub duration_s: f64,
    /// X position of the measurement line, meters.
    #[serde(default)]
    pub measurement_x_m: f64,
    /// Vehicles farther than this from the camera are not observed.
    #[serde(default = "default_max_range")]
    pub max_range_m: f64,
    /// Smallest detectable box height, pixels.
    #[serde(default = "default_min_box")]
    pub min_box_px: f64,
    #[serde(default)]
    pub render: RenderSpec,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.version != SCENE_VERSION {
            return bad(format!("unsupported scene version {:?}", self.version));
        }
        let c = &self.camera;
        if !(c.height_m > 0.0) {
            return bad("camera height must be positive".into());
        }
        if !(c.focal_px > 0.0) {
            return bad("focal length must be positive".into());
        }
        if !(c.tilt_deg > 0.5 && c.tilt_deg < 89.5) {
            return bad("tilt must lie in (0.5, 89.5) degrees".into());
        }
        if !(c.pan_deg.abs() >= 1.0 && c.pan_deg.abs() <= 80.0) {
            return bad("pan magnitude must lie in [1, 80] degrees".into());
        }
        if !(c.roll_deg.abs() <= 30.0) {
            return bad("roll magnitude must not exceed 30 degrees".into());
        }
        if self.image.width < 64 || self.image.height < 64 {
            return bad("image must be at least 64x64".into());
        }
        if self.lanes.count == 0 || !(self.lanes.width_m > 0.0) {
            return bad("need at least one lane of positive width".into());
        }
        if !(self.fps > 0.0) || !(self.duration_s > 0.0) {
            return bad("frame rate and duration must be positive".into());
        }
        if self.render.stride == 0 {
            return bad("render stride must be positive".into());
        }
        for v in self.vehicles.iter().chain(&self.spurious) {
            if !(v.speed_kmh > 0.0) {
                return bad(format!("vehicle speed {} must be positive", v.speed_kmh));
            }
            if v.lane >= self.lanes.count {
                return bad(format!("lane {} does not exist", v.lane));
            }
            if WireframeModel::builtin(&v.model).is_none() {
                return bad(format!("unknown model {:?}", v.model));
            }
            if v.length_m.is_some_and(|l| !(l > 0.0)) {
                return bad("vehicle length must be positive".into());
            }
        }
        Ok(())
    }

    /// A randomized scene: camera pose, focal length and traffic drawn from
    /// `seed`. Steep cameras get short lenses and more height so a long
    /// stretch of road stays in view.
    pub fn sampled(seed: u64, noise: NoiseSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: f64 = rng.random();
        let tilt: f64 = 10.0 + 30.0 * a;
        // Upper image edge a few degrees below the horizon.
        let half_fov = (tilt - rng.random_range(5.0..7.0)).max(4.0).to_radians();
        let focal_w = (540.0 / half_fov.tan() / 1920.0 * rng.random_range(0.95..1.05)).clamp(0.7, 2.0);
        let pan = rng.random_range(15.0..30.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let height = 8.0 + 8.0 * a + rng.random_range(-1.0..1.0);
        let lanes = 3;
        let models = ["combi", "sedan", "combi", "sedan", "van"];
        let mut vehicles = Vec::new();
        let mut t = 0.0;
        for i in 0..16 {
            vehicles.push(VehicleSpec {
                model: models[i % models.len()].into(),
                length_m: None,
                speed_kmh: rng.random_range(50.0..130.0),
                lane: i % lanes,
                entry_s: t,
                oncoming: i % lanes == 2,
                detected: true,
            });
            t += rng.random_range(0.8..1.6);
        }
        Self {
            version: SCENE_VERSION.into(),
            camera: CameraSpec {
                focal_px: focal_w * 1920.0,
                tilt_deg: tilt,
                pan_deg: pan,
                roll_deg: rng.random_range(-3.0..3.0),
                height_m: height,
            },
            image: ImageSize::new(1920, 1080),
            lanes: LaneSpec {
                count: lanes,
                width_m: 3.5,
            },
            vehicles,
            spurious: Vec::new(),
            noise,
            fps: 25.0,
            duration_s: t + 12.0,
            measurement_x_m: 0.0,
            max_range_m: default_max_range(),
            min_box_px: default_min_box(),
            render: RenderSpec::default(),
        }
    }

    pub fn frame_count(&self) -> u32 {
        (self.duration_s * self.fps).floor() as u32 + 1
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5 - self.lanes.count as f64 / 2.0) * self.lanes.width_m
    }

    /// Y of the lane boundaries, ascending.
    pub fn lane_boundaries(&self) -> Vec<f64> {
        let w = self.lanes.width_m;
        let y0 = -(self.lanes.count as f64) * w / 2.0;
        (0..=self.lanes.count).map(|k| y0 + k as f64 * w).collect()
    }
}

/// Pinhole camera with the principal point at the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimCamera {
    pub focal: f64,
    pub size: ImageSize,
    pub height: f64,
    pub center: Vector3<f64>,
    /// Rows: camera right, down and forward axes in world coordinates.
    pub rotation: Matrix3<f64>,
}

impl SimCamera {
    pub fn new(spec: &CameraSpec, size: ImageSize) -> Self {
        let (t, p, r) = (spec.tilt_deg.to_radians(), spec.pan_deg.to_radians(), spec.roll_deg.to_radians());
        let d = spec.height_m / t.tan();
        let center = Vector3::new(-d * p.cos(), -d * p.sin(), spec.height_m);
        let right = Vector3::new(p.sin(), -p.cos(), 0.0);
        let forward = Vector3::new(t.cos() * p.cos(), t.cos() * p.sin(), -t.sin());
        let down = forward.cross(&right);
        let right_r = right * r.cos() + down * r.sin();
        let down_r = down * r.cos() - right * r.sin();
        Self {
            focal: spec.focal_px,
            size,
            height: spec.height_m,
            center,
            rotation: Matrix3::from_rows(&[right_r.transpose(), down_r.transpose(), forward.transpose()]),
        }
    }

    /// Camera-frame coordinates of a world point, in pseudo-units.
    pub fn to_camera(&self, w: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (w - self.center) / self.height
    }

    pub fn project(&self, w: &Vector3<f64>) -> Option<ImagePoint> {
        let c = self.rotation * (w - self.center);
        (c.z > 1e-9).then(|| ImagePoint::new(self.focal * c.x / c.z, self.focal * c.y / c.z))
    }

    pub fn vanishing_point(&self, dir: &Vector3<f64>) -> Option<ImagePoint> {
        let c = self.rotation * dir;
        (c.z.abs() > 1e-12).then(|| ImagePoint::new(self.focal * c.x / c.z, self.focal * c.y / c.z))
    }

    pub fn calibration(&self) -> Result<CameraCalibration> {
        let vp1 = self.vanishing_point(&Vector3::x()).ok_or(Error::DegenerateVps)?;
        let vp2 = self.vanishing_point(&Vector3::y()).ok_or(Error::DegenerateVps)?;
        Ok(CameraCalibration::from_vps(vp1, vp2, self.size)?.with_scale(self.height))
    }

    pub fn ground_distance(&self, w: &Vector3<f64>) -> f64 {
        (w.x - self.center.x).hypot(w.y - self.center.y)
    }
}

/// Motion of one simulated vehicle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehiclePath {
    pub id: u64,
    pub model: WireframeModel,
    pub lane: usize,
    pub y: f64,
    /// +1 along +X, −1 against it.
    pub heading: f64,
    pub speed_ms: f64,
    pub entry_s: f64,
    pub exit_s: f64,
    /// Base-center X at the entry time.
    pub start_x: f64,
    pub detected: bool,
    pub spurious: bool,
}

impl VehiclePath {
    pub fn x_at(&self, t: f64) -> f64 {
        self.start_x + self.heading * self.speed_ms * (t - self.entry_s)
    }

    pub fn present(&self, t: f64) -> bool {
        t >= self.entry_s && t <= self.exit_s
    }

    pub fn world_vertex(&self, v: &[f64; 3], t: f64) -> Vector3<f64> {
        Vector3::new(self.x_at(t) + self.heading * v[0], self.y + self.heading * v[1], v[2])
    }

    /// Time the front anchor reaches `x`.
    pub fn front_crossing(&self, x: f64) -> f64 {
        let front = self.model.anchors().0[0];
        self.entry_s + (x - self.heading * front - self.start_x) * self.heading / self.speed_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub calibration: CameraCalibration,
    pub vp1: ImagePoint,
    pub vp2: ImagePoint,
    pub focal: f64,
    pub scale: f64,
    pub passes: Vec<GroundTruthPass>,
    /// Noise-free markings.
    pub markings: GroundTruthMarking,
    pub lane_geometry: LaneGeometry,
    pub duration_s: f64,
}

/// Everything the pipeline consumes from one scene, plus the truth.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub config: SceneConfig,
    pub seed: u64,
    pub truth: SceneTruth,
    pub trajectories: Vec<TrajectoryPoint>,
    pub detections: Vec<Detection>,
    pub markings: GroundTruthMarking,
    pub rendered_frames: Vec<u32>,
    scene: Scene,
}

impl SceneBundle {
    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn render_frame(&self, frame: u32) -> RasterImage {
        self.scene.render_frame(frame)
    }
}

/// A configured scene: camera plus vehicle paths.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub seed: u64,
    pub camera: SimCamera,
    pub vehicles: Vec<VehiclePath>,
}

const STREAM_TRAJECTORY: u64 = 1;
const STREAM_DETECTION: u64 = 2;
const STREAM_RENDER: u64 = 3;
const STREAM_MARKINGS: u64 = 4;

/// Paint brightness of a vehicle, spread over `[0.55, 1)` by id.
fn vehicle_brightness(id: u64) -> f64 {
    0.55 + 0.45 * (id as f64 * 0.618_033_988_749_895).fract()
}

/// Independent random stream for `(purpose, index)`.
fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose << 40 | index);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
    } else {
        0.0
    }
}

fn uniform(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..half)
    } else {
        0.0
    }
}

impl Scene {
    pub fn new(config: SceneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let camera = SimCamera::new(&config.camera, config.image);
        let mut vehicles = Vec::new();
        let all = config
            .vehicles
            .iter()
            .map(|v| (v, false))
            .chain(config.spurious.iter().map(|v| (v, true)));
        for (id, (spec, spurious)) in all.enumerate() {
            let mut model = WireframeModel::builtin(&spec.model).expect("validated model");
            if let Some(l) = spec.length_m {
                model = model.scaled(l / model.length_m);
            }
            let y = config.lane_center(spec.lane);
            let (near, far) = visible_range(&camera, &config, y)
                .ok_or_else(|| Error::ConfigInvalid(format!("lane {} is not visible from the camera", spec.lane)))?;
            let half = model.length_m / 2.0 + 1.0;
            let heading = if spec.oncoming { -1.0 } else { 1.0 };
            let (start_x, end_x) = if spec.oncoming {
                (far + half, near - half)
            } else {
                (near - half, far + half)
            };
            let speed_ms = spec.speed_kmh / 3.6;
            vehicles.push(VehiclePath {
                id: id as u64,
                model,
                lane: spec.lane,
                y,
                heading,
                speed_ms,
                entry_s: spec.entry_s,
                exit_s: spec.entry_s + (end_x - start_x).abs() / speed_ms,
                start_x,
                detected: spec.detected,
                spurious,
            });
        }
        Ok(Self {
            config,
            seed,
            camera,
            vehicles,
        })
    }

    pub fn time(&self, frame: u32) -> f64 {
        frame as f64 / self.config.fps
    }

    fn inside(&self, p: ImagePoint) -> bool {
        self.config.image.contains(p, 0.0)
    }

    /// Projected vertices of a vehicle when it is fully visible and close enough.
    fn observed_vertices(&self, v: &VehiclePath, t: f64) -> Option<Vec<ImagePoint>> {
        if !v.present(t) {
            return None;
        }
        let n = v.model.vertices.len();
        let mut pts = Vec::with_capacity(n);
        for vert in &v.model.vertices {
            let w = v.world_vertex(vert, t);
            if self.camera.ground_distance(&w) > self.config.max_range_m {
                return None;
            }
            let p = self.camera.project(&w)?;
            if !self.config.image.contains(p, 2.0) {
                return None;
            }
            pts.push(p);
        }
        Some(pts)
    }

    pub fn trajectories(&self) -> Vec<TrajectoryPoint> {
        let sigma = self.config.noise.trajectory_sigma_px;
        let frames: Vec<Vec<TrajectoryPoint>> = (0..self.config.frame_count())
            .into_par_iter()
            .map(|f| {
                let t = self.time(f);
                let mut rng = stream(self.seed, STREAM_TRAJECTORY, f as u64);
                let mut out = Vec::new();
                for v in &self.vehicles {
                    if !v.present(t) {
                        continue;
                    }
                    for (k, vert) in v.model.vertices.iter().enumerate() {
                        if k == v.model.anchor_front || k == v.model.anchor_rear {
                            continue;
                        }
                        let w = v.world_vertex(vert, t);
                        if self.camera.ground_distance(&w) > self.config.max_range_m {
                            continue;
                        }
                        let Some(p) = self.camera.project(&w) else { continue };
                        if !self.inside(p) {
                            continue;
                        }
                        let noisy = ImagePoint::new(p.x + gaussian(&mut rng, sigma), p.y + gaussian(&mut rng, sigma));
                        out.push(TrajectoryPoint {
                            track_id: v.id * 1000 + k as u64,
                            frame: f,
                            point: noisy,
                        });
                    }
                }
                out
            })
            .collect();
        frames.into_iter().flatten().collect()
    }

    pub fn detections(&self) -> Vec<Detection> {
        let jitter = self.config.noise.detection_jitter_px;
        let frames: Vec<Vec<Detection>> = (0..self.config.frame_count())
            .into_par_iter()
            .map(|f| {
                let t = self.time(f);
                let mut rng = stream(self.seed, STREAM_DETECTION, f as u64);
                let mut out = Vec::new();
                for v in self.vehicles.iter().filter(|v| v.detected) {
                    let Some(pts) = self.observed_vertices(v, t) else { continue };
                    let b = BBox::from_points(pts.iter().copied()).expect("vertices exist");
                    if b.height() < self.config.min_box_px {
                        continue;
                    }
                    let bbox = BBox::new(
                        b.x0 + uniform(&mut rng, jitter),
                        b.y0 + uniform(&mut rng, jitter),
                        b.x1 + uniform(&mut rng, jitter),
                        b.y1 + uniform(&mut rng, jitter),
                    );
                    let shift = ImagePoint::new(uniform(&mut rng, jitter), uniform(&mut rng, jitter));
                    let hull = convex_hull(&pts).into_iter().map(|p| p + shift).collect();
                    out.push(Detection {
                        frame: f,
                        t,
                        bbox,
                        class: v.model.id.clone(),
                        confidence: 0.9,
                        hull: Some(hull),
                    });
                }
                out
            })
            .collect();
        frames.into_iter().flatten().collect()
    }

    /// Frames that are rendered for edge extraction.
    pub fn rendered_frames(&self) -> Vec<u32> {
        let stride = self.config.render.stride;
        (0..self.config.frame_count())
            .filter(|f| f % stride == 0)
            .filter(|&f| {
                let t = self.time(f);
                self.vehicles.iter().any(|v| self.observed_vertices(v, t).is_some())
            })
            .take(self.config.render.max_frames)
            .collect()
    }

    /// Every vehicle in view as shaded solid boxes over a flat background,
    /// drawn far to near, plus random clutter segments.
    pub fn render_frame(&self, frame: u32) -> RasterImage {
        let t = self.time(frame);
        let mut canvas = render::Canvas::new(self.config.image);
        let mut lengths = Vec::new();
        let mut order: Vec<(f64, &VehiclePath)> = self
            .vehicles
            .iter()
            .filter(|v| v.present(t))
            .map(|v| ((v.world_vertex(&[0.0; 3], t) - self.camera.center).norm(), v))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
        for (_, v) in order {
            let world: Vec<Vector3<f64>> = v.model.vertices.iter().map(|p| v.world_vertex(p, t)).collect();
            let pts: Vec<Option<ImagePoint>> = world
                .iter()
                .map(|w| {
                    (self.camera.ground_distance(w) <= self.config.max_range_m)
                        .then(|| self.camera.project(w))
                        .flatten()
                })
                .collect();
            let brightness = vehicle_brightness(v.id);
            for b in v.model.boxes() {
                for face in self.box_faces(&b, &world, &pts, brightness) {
                    canvas.fill(&face);
                }
            }
            for e in &v.model.edges {
                if let (Some(a), Some(b)) = (pts[e[0]], pts[e[1]]) {
                    lengths.push(a.distance(b));
                }
            }
        }
        let frac = self.config.noise.edge_outlier_fraction.clamp(0.0, 0.95);
        if frac > 0.0 && !lengths.is_empty() {
            let mut rng = stream(self.seed, STREAM_RENDER, frame as u64);
            let count = (frac / (1.0 - frac) * lengths.len() as f64).round() as usize;
            let (w, h) = (self.config.image.width as f64, self.config.image.height as f64);
            for _ in 0..count {
                let c = ImagePoint::new(rng.random_range(-w / 2.0..w / 2.0), rng.random_range(-h / 2.0..h / 2.0));
                let ang = rng.random_range(0.0..std::f64::consts::PI);
                let len = lengths[rng.random_range(0..lengths.len())];
                let d = ImagePoint::new(ang.cos(), ang.sin()) * (len / 2.0);
                canvas.line(c - d, c + d);
            }
        }
        canvas.into_image()
    }

    /// Visible faces of one box, with boundaries between them extended
    /// under the face drawn later.
    fn box_faces(&self, b: &[usize; 8], world: &[Vector3<f64>], pts: &[Option<ImagePoint>], brightness: f64) -> Vec<render::Face> {
        // Cyclic corner orders of the faces, bottom excluded.
        const FACES: [[usize; 4]; 5] = [[0, 2, 6, 4], [1, 5, 7, 3], [0, 4, 5, 1], [2, 3, 7, 6], [4, 6, 7, 5]];
        let light = Vector3::new(0.35, 0.55, 0.76).normalize();
        let center = b.iter().map(|&i| world[i]).sum::<Vector3<f64>>() / 8.0;
        let visible: Vec<([usize; 4], f64)> = FACES
            .iter()
            .filter_map(|f| {
                let idx = f.map(|k| b[k]);
                let fc = idx.iter().map(|&i| world[i]).sum::<Vector3<f64>>() / 4.0;
                let normal = (fc - center).normalize();
                ((fc - self.camera.center).dot(&normal) < 0.0).then_some((idx, 0.45 + 0.45 * normal.dot(&light)))
            })
            .collect();
        let mut out = Vec::new();
        for (n, (idx, lit)) in visible.iter().enumerate() {
            let Some(corners) = idx.iter().map(|&i| pts[i]).collect::<Option<Vec<_>>>() else {
                continue;
            };
            let extend = std::array::from_fn(|e| {
                let (a, c) = (idx[e], idx[(e + 1) % 4]);
                visible[n + 1..].iter().any(|(o, _)| o.contains(&a) && o.contains(&c))
            });
            out.push(render::Face {
                corners: [corners[0], corners[1], corners[2], corners[3]],
                shade: (brightness * lit) as f32,
                extend,
            });
        }
        out
    }

    fn project_ground(&self, x: f64, y: f64) -> Option<ImagePoint> {
        self.camera.project(&Vector3::new(x, y, 0.0))
    }

    /// Lane lines, perpendicular lines and measured segments around the
    /// measurement line, without noise.
    pub fn markings(&self) -> GroundTruthMarking {
        let bounds = self.config.lane_boundaries();
        let (ymin, ymax) = (bounds[0], bounds[bounds.len() - 1]);
        let xm = self.config.measurement_x_m;
        let mut xs: Vec<f64> = (-12..=12).map(|k| xm + 2.0 * k as f64).collect();
        xs.retain(|&x| bounds.iter().all(|&y| self.project_ground(x, y).is_some_and(|p| self.inside(p))));
        let mut m = GroundTruthMarking::default();
        if xs.len() < 2 {
            return m;
        }
        let (xa, xb) = (xs[0], xs[xs.len() - 1]);
        let seg = |x1: f64, y1: f64, x2: f64, y2: f64| -> Option<MeasuredSegment> {
            Some(MeasuredSegment {
                p1: self.project_ground(x1, y1)?,
                p2: self.project_ground(x2, y2)?,
                meters: (x2 - x1).hypot(y2 - y1),
            })
        };
        for &y in &bounds {
            if let (Some(a), Some(b)) = (self.project_ground(xa, y), self.project_ground(xb, y)) {
                m.lane_lines.push([a, b]);
            }
        }
        let step = ((xs.len() - 1) / 4).max(1);
        for &x in xs.iter().step_by(step) {
            if let (Some(a), Some(b)) = (self.project_ground(x, ymin), self.project_ground(x, ymax)) {
                m.perpendicular_lines.push([a, b]);
            }
            m.d2.extend(seg(x, ymin, x, ymax));
            m.d2.extend(bounds.windows(2).filter_map(|w| seg(x, w[0], x, w[1])));
        }
        let len = ((xb - xa) / 2.0).max(2.0).min(xb - xa);
        for &y in &bounds {
            m.d1.extend(seg(xa, y, xa + len, y));
            m.d1.extend(seg(xb - len, y, xb, y));
        }
        m
    }

    pub fn noisy_markings(&self, clean: &GroundTruthMarking) -> GroundTruthMarking {
        let sigma = self.config.noise.marking_sigma_px;
        let mut rng = stream(self.seed, STREAM_MARKINGS, 0);
        let mut jitter = |p: ImagePoint| ImagePoint::new(p.x + gaussian(&mut rng, sigma), p.y + gaussian(&mut rng, sigma));
        let mut m = clean.clone();
        for l in m.lane_lines.iter_mut().chain(m.perpendicular_lines.iter_mut()) {
            *l = [jitter(l[0]), jitter(l[1])];
        }
        for s in m.d1.iter_mut().chain(m.d2.iter_mut()) {
            s.p1 = jitter(s.p1);
            s.p2 = jitter(s.p2);
        }
        m
    }

    pub fn lane_geometry(&self) -> Result<LaneGeometry> {
        let bounds = self.config.lane_boundaries();
        let xm = self.config.measurement_x_m;
        let pts: Vec<ImagePoint> = bounds
            .iter()
            .map(|&y| self.project_ground(xm, y).ok_or(Error::BehindCamera))
            .collect::<Result<_>>()?;
        let mut g = LaneGeometry {
            start: pts[0],
            end: pts[pts.len() - 1],
            boundaries: Vec::new(),
        };
        g.boundaries = pts.iter().map(|&p| g.position(p)).collect();
        // Keep the outer boundaries inclusive of their own lanes.
        let last = g.boundaries.len() - 1;
        g.boundaries[last] += 1e-9;
        Ok(g)
    }

    pub fn passes(&self) -> Vec<GroundTruthPass> {
        let xm = self.config.measurement_x_m;
        let mut out: Vec<GroundTruthPass> = self
            .vehicles
            .iter()
            .filter(|v| !v.spurious)
            .filter_map(|v| {
                let t = v.front_crossing(xm);
                (v.present(t) && t <= self.config.duration_s).then_some(GroundTruthPass {
                    vehicle_id: v.id,
                    lane: v.lane,
                    t,
                    speed_kmh: v.speed_ms * 3.6,
                })
            })
            .collect();
        out.sort_by(|a, b| a.t.total_cmp(&b.t));
        out
    }

    pub fn truth(&self) -> Result<SceneTruth> {
        let calibration = self.camera.calibration()?;
        Ok(SceneTruth {
            vp1: calibration.vp1,
            vp2: calibration.vp2,
            focal: calibration.focal,
            scale: self.camera.height,
            calibration,
            passes: self.passes(),
            markings: self.markings(),
            lane_geometry: self.lane_geometry()?,
            duration_s: self.config.duration_s,
        })
    }
}

/// X range of a lane's center line that is visible, within range and in
/// front of the camera.
fn visible_range(camera: &SimCamera, config: &SceneConfig, y: f64) -> Option<(f64, f64)> {
    let mut lo = None;
    let mut hi = None;
    let mut x = -400.0;
    while x <= 400.0 {
        let w = Vector3::new(x, y, 0.0);
        let ok = camera.ground_distance(&w) <= config.max_range_m && camera.project(&w).is_some_and(|p| config.image.contains(p, 0.0));
        if ok {
            lo.get_or_insert(x);
            hi = Some(x);
        }
        x += 0.25;
    }
    Some((lo?, hi?))
}

/// Builds the scene and every observation it emits.
pub fn generate(config: SceneConfig, seed: u64) -> Result<SceneBundle> {
    let scene = Scene::new(config, seed)?;
    let truth = scene.truth()?;
    let markings = scene.noisy_markings(&truth.markings);
    Ok(SceneBundle {
        config: scene.config.clone(),
        seed,
        trajectories: scene.trajectories(),
        detections: scene.detections(),
        rendered_frames: scene.rendered_frames(),
        markings,
        truth,
        scene,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Scene {
        Scene::new(SceneConfig::sampled(3, NoiseSpec::default()), 3).unwrap()
    }

    #[test]
    fn truth_calibration_matches_projection() {
        let s = scene();
        let c = s.camera.calibration().unwrap();
        for w in [
            Vector3::new(5.0, 1.0, 0.0),
            Vector3::new(-7.0, -3.0, 0.0),
            Vector3::new(20.0, 4.0, 0.0),
        ] {
            let p = s.camera.project(&w).unwrap();
            let g = c.project_to_road(p).unwrap();
            let expect = s.camera.to_camera(&w);
            assert!((g - expect).norm() < 1e-9 * expect.norm(), "{g} vs {expect}");
        }
    }

    #[test]
    fn markings_round_trip() {
        let s = scene();
        let t = s.truth().unwrap();
        assert!(!t.markings.d1.is_empty() && !t.markings.d2.is_empty());
        for seg in t.markings.segments() {
            let d = t.calibration.ground_distance(seg.p1, seg.p2).unwrap();
            assert!((d - seg.meters).abs() < 1e-9 * seg.meters.max(1.0), "{d} vs {}", seg.meters);
        }
    }

    #[test]
    fn lane_lines_meet_at_vp1() {
        let s = scene();
        let t = s.truth().unwrap();
        for l in &t.markings.lane_lines {
            let line = crate::geometry::Line2::through(l[0], l[1]).unwrap();
            assert!(line.distance(t.vp1) < 1e-6);
        }
    }

    #[test]
    fn passes_are_at_constant_speed() {
        let s = scene();
        for v in &s.vehicles {
            let (a, b) = (v.x_at(1.0), v.x_at(3.5));
            assert!(((b - a).abs() - v.speed_ms * 2.5).abs() < 1e-9);
        }
        assert!(!s.passes().is_empty());
    }

    #[test]
    fn deterministic_generation() {
        let cfg = SceneConfig::sampled(
            5,
            NoiseSpec {
                trajectory_sigma_px: 0.5,
                detection_jitter_px: 2.0,
                ..Default::default()
            },
        );
        let a = generate(cfg.clone(), 9).unwrap();
        let b = generate(cfg, 9).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.detections, b.detections);
    }
}
