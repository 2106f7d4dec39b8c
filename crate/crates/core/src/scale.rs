//! Scene scale from wireframe models aligned with detected boxes.
//!
//! Each classified vehicle is rendered at a sweep of candidate scales, with
//! its base centered on the base center of the vehicle's 3D box and its axes
//! along the road. The rendered anchors give a scale sample
//! `λ = l / ‖F − R‖`; samples whose rendered box matches the detected box
//! with IoU above the threshold vote, weighted by IoU, in a kernel density
//! whose mode is the scale estimate.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraCalibration, GroundPoint};
use crate::error::{Error, Result};
use crate::geometry::{BBox, ImagePoint};
use crate::tracking::{BoundingBox3D, Track, TrackGeometry, Travel, OTHER_CLASS};
use crate::wireframe::WireframeModel;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.85;
pub const DEFAULT_GRID_SIZE: usize = 60;
pub const KDE_POINTS: usize = 1025;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Placement of a model on the road, in camera coordinates (pseudo-units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPose {
    pub position: GroundPoint,
    pub forward: Vector3<f64>,
    pub left: Vector3<f64>,
    pub up: Vector3<f64>,
}

impl ModelPose {
    /// Model standing at the road point under `base_center`, facing the
    /// direction of travel.
    pub fn on_road(base_center: ImagePoint, travel: Travel, calib: &CameraCalibration) -> Result<Self> {
        let [flow, _, up] = calib.road_axes()?;
        let forward = match travel {
            Travel::TowardVp1 => flow,
            Travel::AwayFromVp1 => -flow,
        };
        Ok(Self {
            position: calib.project_to_road(base_center)?,
            forward,
            left: up.cross(&forward),
            up,
        })
    }

    /// Camera-frame position of a model-frame point at `lambda` meters per unit.
    pub fn place(&self, v: &[f64; 3], lambda: f64) -> Vector3<f64> {
        self.position + (self.forward * v[0] + self.left * v[1] + self.up * v[2]) / lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rendered {
    pub bbox: BBox,
    pub front: ImagePoint,
    pub rear: ImagePoint,
}

/// Box of the projected model vertices and the image positions of its anchors.
pub fn rendered_bbox(model: &WireframeModel, pose: &ModelPose, lambda: f64, calib: &CameraCalibration) -> Result<Rendered> {
    let project = |v: &[f64; 3]| calib.image_of(&pose.place(v, lambda)).ok_or(Error::BehindCamera);
    let pts: Vec<ImagePoint> = model.vertices.iter().map(project).collect::<Result<_>>()?;
    let (f, r) = model.anchors();
    Ok(Rendered {
        bbox: BBox::from_points(pts).ok_or(Error::BehindCamera)?,
        front: project(&f)?,
        rear: project(&r)?,
    })
}

/// One classified vehicle used for scale inference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleInstance {
    pub id: u64,
    pub class: String,
    pub frame: u32,
    pub detection: BBox,
    pub bbox3d: BoundingBox3D,
    pub travel: Travel,
}

/// The median-position detection with a 3D box of every classified track.
pub fn scale_instances(tracks: &[Track], geometry: &[TrackGeometry]) -> Vec<ScaleInstance> {
    let mut out = Vec::new();
    for (t, g) in tracks.iter().zip(geometry) {
        let class = t.class();
        if class == OTHER_CLASS || g.samples.is_empty() {
            continue;
        }
        let (frame, _, b, _) = g.samples[(g.samples.len() - 1) / 2];
        let Some(d) = t.detections.iter().find(|d| d.frame == frame) else {
            continue;
        };
        out.push(ScaleInstance {
            id: t.id,
            class,
            frame,
            detection: d.bbox,
            bbox3d: b,
            travel: g.travel,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSample {
    pub instance: u64,
    pub j: usize,
    pub lambda: f64,
    pub score: f64,
}

/// `n` log-spaced scales spanning about `[0.5, 1.5] · λ0`, with `λ0` itself
/// on the grid so the IoU window around an exact prior samples both sides
/// evenly.
pub fn scale_grid(lambda0: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lambda0; n];
    }
    let step = (1.5_f64 / 0.5).ln() / (n - 1) as f64;
    let k0 = (0.5_f64.ln() / step).round() as i64;
    (0..n as i64).map(|k| lambda0 * ((k0 + k) as f64 * step).exp()).collect()
}

pub fn box_length_scale(inst: &ScaleInstance, model: &WireframeModel, calib: &CameraCalibration) -> Result<f64> {
    let b = &inst.bbox3d;
    let g = |i: usize| calib.project_to_road(b.corners[i]);
    let end0 = (g(0)? + g(2)?) * 0.5;
    let end1 = (g(1)? + g(3)?) * 0.5;
    let len = (end1 - end0).norm();
    if !(len > 0.0) {
        return Err(Error::DegenerateHull);
    }
    Ok(model.length_m / len)
}

pub fn collect_scale_samples(
    instances: &[ScaleInstance],
    models: &BTreeMap<String, WireframeModel>,
    calib: &CameraCalibration,
    grid: &[f64],
    threshold: f64,
) -> Result<Vec<ScaleSample>> {
    let usable: Vec<(&ScaleInstance, &WireframeModel, ModelPose)> = instances
        .iter()
        .filter_map(|i| {
            let m = models.get(&i.class)?;
            let c = i.bbox3d.base_center().ok()?;
            let pose = ModelPose::on_road(c, i.travel, calib).ok()?;
            Some((i, m, pose))
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::NoModelsMatched);
    }
    let samples: Vec<ScaleSample> = usable
        .par_iter()
        .flat_map_iter(|(inst, model, pose)| {
            grid.iter().enumerate().filter_map(move |(j, &lambda_j)| {
                let r = rendered_bbox(model, pose, lambda_j, calib).ok()?;
                let score = iou(&r.bbox, &inst.detection);
                if !(score > threshold) {
                    return None;
                }
                let sep = calib.pseudo_distance(r.front, r.rear).ok()?;
                Some(ScaleSample {
                    instance: inst.id,
                    j,
                    lambda: model.length_m / sep,
                    score,
                })
            })
        })
        .collect();
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kde {
    pub lambda: f64,
    /// Kernel width in `ln λ`.
    pub bandwidth: f64,
    /// `(λ, density)` on the evaluation grid.
    pub density: Vec<(f64, f64)>,
}

/// Weighted Gaussian KDE over `ln λ`, evaluated on a regular grid; returns
/// the mode with parabolic refinement. Working in log space keeps the
/// estimate unbiased for the multiplicative spread of a log-spaced sweep.
/// `bandwidth` is in log units. Ties go to the smaller λ.
pub fn kde_argmax(samples: &[ScaleSample], bandwidth: Option<f64>, points: usize) -> Result<Kde> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if samples.iter().any(|s| !(s.lambda > 0.0)) {
        return Err(Error::InvalidInput("scale samples must be positive".into()));
    }
    let points = points.max(3);
    let u: Vec<f64> = samples.iter().map(|s| s.lambda.ln()).collect();
    let wsum: f64 = samples.iter().map(|s| s.score).sum();
    let norm_w = |s: &ScaleSample| if wsum > 0.0 { s.score / wsum } else { 1.0 / samples.len() as f64 };
    let mean: f64 = samples.iter().zip(&u).map(|(s, x)| norm_w(s) * x).sum();
    let var: f64 = samples.iter().zip(&u).map(|(s, x)| norm_w(s) * (x - mean).powi(2)).sum();
    let n = samples.len() as f64;
    let h = bandwidth.unwrap_or_else(|| (1.06 * var.sqrt() * n.powf(-0.2)).max(1e-3));
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let step = (hi - lo) / (points - 1) as f64;
    let density: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let x = lo + step * i as f64;
            let d: f64 = samples
                .iter()
                .zip(&u)
                .map(|(s, ui)| s.score * (-0.5 * ((x - ui) / h).powi(2)).exp())
                .sum();
            (x, d)
        })
        .collect();
    let mut best = 0;
    for i in 1..points {
        if density[i].1 > density[best].1 {
            best = i;
        }
    }
    let mut mode = density[best].0;
    if best > 0 && best + 1 < points {
        let (a, b, c) = (density[best - 1].1, density[best].1, density[best + 1].1);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            mode += 0.5 * (a - c) / denom * step;
        }
    }
    Ok(Kde {
        lambda: mode.exp(),
        bandwidth: h,
        density: density.into_iter().map(|(x, d)| (x.exp(), d)).collect(),
    })
}

/// Linear correction `λ_gt ≈ α λ* + β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRegression {
    pub alpha: f64,
    pub beta: f64,
}

impl ScaleRegression {
    pub fn apply(&self, lambda: f64) -> f64 {
        self.alpha * lambda + self.beta
    }
}

/// Ordinary least squares on `(λ*, λ_gt)` pairs.
pub fn fit_scale_regression(pairs: &[(f64, f64)]) -> Result<ScaleRegression> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData {
            what: "regression scenes",
            got: pairs.len(),
            need: 2,
        });
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-24 * mx * mx * n) {
        return Err(Error::DegenerateFit);
    }
    let alpha = sxy / sxx;
    Ok(ScaleRegression {
        alpha,
        beta: my - alpha * mx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleOptions {
    pub iou_threshold: f64,
    pub grid_size: usize,
    pub kde_points: usize,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            grid_size: DEFAULT_GRID_SIZE,
            kde_points: KDE_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleEstimate {
    pub lambda: f64,
    pub lambda_reg: Option<f64>,
    pub regression: Option<ScaleRegression>,
    pub lambda0: f64,
    pub instances: usize,
    pub samples: usize,
    /// `(instance id, frame)` used for every vehicle.
    pub instance_frames: Vec<(u64, u32)>,
    pub kde: Kde,
}

impl ScaleEstimate {
    /// Regression-corrected scale when available, raw otherwise.
    pub fn best(&self) -> f64 {
        self.lambda_reg.unwrap_or(self.lambda)
    }
}

pub fn infer_scale(
    instances: &[ScaleInstance],
    models: &BTreeMap<String, WireframeModel>,
    calib: &CameraCalibration,
    regression: Option<ScaleRegression>,
    opts: &ScaleOptions,
) -> Result<ScaleEstimate> {
    let lambda0 = instances
        .iter()
        .find_map(|i| models.get(&i.class).and_then(|m| box_length_scale(i, m, calib).ok()))
        .ok_or(Error::NoModelsMatched)?;
    let grid = scale_grid(lambda0, opts.grid_size);
    let samples = collect_scale_samples(instances, models, calib, &grid, opts.iou_threshold)?;
    let kde = kde_argmax(&samples, None, opts.kde_points)?;
    Ok(ScaleEstimate {
        lambda: kde.lambda,
        lambda_reg: regression.map(|r| r.apply(kde.lambda)),
        regression,
        lambda0,
        instances: instances.iter().filter(|i| models.contains_key(&i.class)).count(),
        samples: samples.len(),
        instance_frames: instances.iter().map(|i| (i.id, i.frame)).collect(),
        kde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(lambda: f64, score: f64) -> ScaleSample {
        ScaleSample {
            instance: 0,
            j: 0,
            lambda,
            score,
        }
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(20.0, 0.0, 30.0, 10.0)), 0.0);
        assert!((iou(&a, &BBox::new(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_samples_give_their_value() {
        let s: Vec<ScaleSample> = (0..7).map(|_| sample(7.25, 0.9)).collect();
        let k = kde_argmax(&s, None, KDE_POINTS).unwrap();
        assert!((k.lambda - 7.25).abs() < 1e-9, "{}", k.lambda);
    }

    #[test]
    fn heavy_cluster_wins() {
        let mut s: Vec<ScaleSample> = (0..10).map(|i| sample(5.0 + 0.01 * i as f64, 1.0)).collect();
        s.push(sample(9.0, 1.0));
        let k = kde_argmax(&s, None, KDE_POINTS).unwrap();
        assert!((k.lambda - 5.05).abs() < 0.2);
    }

    #[test]
    fn empty_samples() {
        assert!(matches!(kde_argmax(&[], None, 10), Err(Error::EmptySamples)));
    }

    #[test]
    fn regression_examples() {
        let r = fit_scale_regression(&[(5.0, 5.0), (7.0, 7.0), (9.0, 9.0)]).unwrap();
        assert!((r.alpha - 1.0).abs() < 1e-9 && r.beta.abs() < 1e-9);
        let r = fit_scale_regression(&[(4.5, 5.0), (6.3, 7.0), (8.1, 9.0)]).unwrap();
        assert!((r.alpha - 1.0 / 0.9).abs() < 1e-6 && r.beta.abs() < 1e-9);
        assert!(matches!(fit_scale_regression(&[(5.0, 5.0), (5.0, 6.0)]), Err(Error::DegenerateFit)));
    }

    #[test]
    fn grid_is_log_spaced_around_prior() {
        let g = scale_grid(8.0, 60);
        assert_eq!(g.len(), 60);
        assert!((g[0] / 4.0 - 1.0).abs() < 0.01 && (g[59] / 12.0 - 1.0).abs() < 0.01);
        assert!(g.iter().any(|&x| (x - 8.0).abs() < 1e-12));
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
    }
}
