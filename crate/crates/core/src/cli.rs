//! The `autocalib` command line.
//!
//! `--scene` names either a bundle directory or a scene configuration file;
//! a configuration is simulated in memory with `--seed`. Every output goes
//! under `--out` and is replaced atomically. Exit codes: 0 success, 1 other
//! failure, 2 configuration or input error, 3 insufficient data, 4 infeasible
//! constraints, 5 nothing to evaluate.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::camera::CameraCalibration;
use crate::error::{Error, Result};
use crate::eval::{histogram_csv, SystemReport};
use crate::geometry::{ImagePoint, ImageSize};
use crate::io::{self, Bundle};
use crate::manual::GroundTruthMarking;
use crate::pipeline::{
    builtin_models, calibrate_scene, evaluate_system, measure_scene, per_frame_edgelets, scene_scale, track_scene, CalibSource,
    CalibrationResult, EdgeletInput, MeasurementResult, PipelineOptions, ScaleContext, ScaleResult, ScaleSource, SceneData, TrackingResult,
};
use crate::scale::ScaleRegression;
use crate::sim::{generate, NoiseSpec, SceneBundle, SceneConfig};
use crate::speed::speeds_csv;
use crate::wireframe::WireframeModel;

pub const THREADS_ENV: &str = "AUTOCALIB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "autocalib",
    version,
    about = "Traffic camera calibration and speed measurement from vehicle motion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene and write it as a bundle directory.
    Simulate(SimulateArgs),
    /// Estimate the camera calibration of a scene.
    Calibrate(CalibrateArgs),
    /// Add a scene scale to an existing calibration.
    InferScale(InferScaleArgs),
    /// Measure vehicle speeds with a scaled calibration.
    Measure(MeasureArgs),
    /// Compare calibrations against a scene's ground truth.
    Evaluate(EvaluateArgs),
    /// Calibrate, infer the scale, measure and evaluate in one go.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibArg {
    Auto,
    Manual,
    Oracle,
}

impl From<CalibArg> for CalibSource {
    fn from(c: CalibArg) -> Self {
        match c {
            CalibArg::Auto => CalibSource::Auto,
            CalibArg::Manual => CalibSource::Manual,
            CalibArg::Oracle => CalibSource::Oracle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Bbox,
    #[value(name = "bbox+reg", alias = "bbox-reg")]
    BboxReg,
    Manual,
    Speed,
    Oracle,
}

impl From<ScaleArg> for ScaleSource {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Bbox => ScaleSource::Bbox,
            ScaleArg::BboxReg => ScaleSource::BboxReg,
            ScaleArg::Manual => ScaleSource::Manual,
            ScaleArg::Speed => ScaleSource::Speed,
            ScaleArg::Oracle => ScaleSource::Oracle,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene configuration (JSON); a scene is sampled from the seed when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Bundle directory, or a scene configuration to simulate.
    #[arg(long)]
    pub scene: PathBuf,
    /// Seed for simulating a scene configuration.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuningArgs {
    /// Frame offset between the two positions of a speed sample.
    #[arg(long, default_value_t = 5)]
    pub tau: usize,
    /// Smallest IoU between a rendered model and a detection that yields a scale sample.
    #[arg(long, default_value_t = 0.85)]
    pub iou_threshold: f64,
    /// Fraction of the strongest edgelets kept for the second vanishing point.
    #[arg(long, default_value_t = 0.25)]
    pub keep_fraction: f64,
    /// Side of the vanishing-point accumulator, in cells.
    #[arg(long, default_value_t = 421)]
    pub diamond_resolution: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Directory of wireframe model files; built-in models when omitted.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Scale regression file, needed by the bbox+reg scale source.
    #[arg(long)]
    pub regression: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub calib_source: CalibArg,
    /// Also infer the scale; implied by --models.
    #[arg(long, value_enum)]
    pub scale_source: Option<ScaleArg>,
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Args)]
pub struct InferScaleArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Calibration to add the scale to.
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long, value_enum, default_value = "bbox")]
    pub scale_source: ScaleArg,
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Calibration with a scale.
    #[arg(long)]
    pub calibration: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Calibration file to evaluate, optionally `name=path`; repeatable.
    #[arg(long)]
    pub calibration: Vec<String>,
    /// Sources to run and evaluate as `calib:scale`, e.g. `auto:bbox`; repeatable.
    #[arg(long)]
    pub system: Vec<String>,
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub calib_source: CalibArg,
    #[arg(long, value_enum, default_value = "bbox")]
    pub scale_source: ScaleArg,
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

/// Process exit code for a pipeline error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ConfigInvalid(_) | Error::InvalidInput(_) | Error::Format { .. } | Error::Json(_) | Error::Io(_) | Error::MissingScale => 2,
        Error::InsufficientData { .. }
        | Error::EmptyAccumulator
        | Error::EmptySamples
        | Error::NoModelsMatched
        | Error::TooShortTrack { .. }
        | Error::DegenerateFit => 3,
        Error::AllMasked | Error::NonPositiveRadicand { .. } | Error::DegenerateVps | Error::EmptyFeasibleGrid => 4,
        Error::EmptyMatches | Error::EmptyMarkings => 5,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match configure_threads().and_then(|()| execute(&cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("autocalib: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::ConfigInvalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A pool built earlier in the same process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::InferScale(a) => infer_scale(a),
        Command::Measure(a) => measure(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Run(a) => run(a),
    }
}

fn read_scene_config(path: &Path) -> Result<SceneConfig> {
    let config: SceneConfig = io::read_json(path).map_err(|e| match e {
        Error::Format { path, reason } => Error::ConfigInvalid(format!("{path}: {reason}")),
        other => other,
    })?;
    config.validate()?;
    Ok(config)
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let config = match &a.scene {
        Some(p) => read_scene_config(p)?,
        None => SceneConfig::sampled(a.seed, NoiseSpec::default()),
    };
    let bundle = generate(config, a.seed)?;
    io::write_scene_bundle(&bundle, &a.out)
}

/// A scene read from disk or simulated from a configuration.
enum Scene {
    Disk(Box<Bundle>),
    Simulated(Box<SceneBundle>),
}

impl Scene {
    fn load(a: &SceneArgs) -> Result<Self> {
        if a.scene.is_dir() {
            Ok(Scene::Disk(Box::new(Bundle::read(&a.scene)?)))
        } else if a.scene.is_file() {
            Ok(Scene::Simulated(Box::new(generate(read_scene_config(&a.scene)?, a.seed)?)))
        } else {
            Err(Error::ConfigInvalid(format!("scene {} does not exist", a.scene.display())))
        }
    }

    fn data(&self) -> SceneData<'_> {
        match self {
            Scene::Disk(b) => b.scene_data(),
            Scene::Simulated(b) => SceneData::from_bundle(b),
        }
    }

    fn image_size(&self) -> ImageSize {
        match self {
            Scene::Disk(b) => b.image_size(),
            Scene::Simulated(b) => b.config.image,
        }
    }

    /// Frame labels matching the order of [`per_frame_edgelets`].
    fn frame_labels(&self) -> Vec<u32> {
        match self {
            Scene::Disk(b) if b.manifest.frames.is_empty() => (0..b.edgelets.as_ref().map_or(0, |e| e.len()) as u32).collect(),
            Scene::Disk(b) => b.manifest.frames.iter().map(|f| f.frame).collect(),
            Scene::Simulated(b) => b.rendered_frames.clone(),
        }
    }

    /// Noise-free markings for evaluation.
    fn truth_markings(&self) -> Option<&GroundTruthMarking> {
        match self {
            Scene::Disk(b) => b.truth.as_ref().map(|t| &t.markings),
            Scene::Simulated(b) => Some(&b.truth.markings),
        }
    }
}

fn options(t: &TuningArgs) -> Result<PipelineOptions> {
    if t.tau == 0 {
        return Err(Error::ConfigInvalid("--tau must be positive".into()));
    }
    if !(t.iou_threshold > 0.0 && t.iou_threshold < 1.0) {
        return Err(Error::ConfigInvalid("--iou-threshold must lie in (0, 1)".into()));
    }
    if !(t.keep_fraction > 0.0 && t.keep_fraction <= 1.0) {
        return Err(Error::ConfigInvalid("--keep-fraction must lie in (0, 1]".into()));
    }
    if t.diamond_resolution < 3 {
        return Err(Error::ConfigInvalid("--diamond-resolution must be at least 3".into()));
    }
    let mut o = PipelineOptions {
        tau: t.tau,
        ..PipelineOptions::default()
    };
    o.scale.iou_threshold = t.iou_threshold;
    o.edgelets.keep_fraction = t.keep_fraction;
    o.vp.resolution = t.diamond_resolution;
    Ok(o)
}

pub fn load_models(dir: Option<&Path>) -> Result<BTreeMap<String, WireframeModel>> {
    let Some(dir) = dir else {
        return Ok(builtin_models());
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::ConfigInvalid(format!("models directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut models = BTreeMap::new();
    for p in paths {
        let m = WireframeModel::read(&p)?;
        if models.insert(m.id.clone(), m).is_some() {
            return Err(Error::ConfigInvalid(format!("model {} is defined twice", p.display())));
        }
    }
    if models.is_empty() {
        return Err(Error::ConfigInvalid(format!("no model files in {}", dir.display())));
    }
    Ok(models)
}

fn load_regression(path: Option<&Path>) -> Result<Option<ScaleRegression>> {
    path.map(io::read_regression).transpose()
}

fn read_calibration_for(path: &Path, size: ImageSize) -> Result<CameraCalibration> {
    let c = io::read_calibration(path)?;
    if c.image_size != size {
        return Err(Error::ConfigInvalid(format!(
            "{} is for a {}x{} image, scene is {}x{}",
            path.display(),
            c.image_size.width,
            c.image_size.height,
            size.width,
            size.height
        )));
    }
    Ok(c)
}

fn point_json(p: ImagePoint, size: ImageSize) -> serde_json::Value {
    json!(p.to_top_left(size))
}

fn calibration_diagnostics(r: &CalibrationResult, source: CalibSource) -> serde_json::Value {
    let size = r.calibration.image_size;
    let vp = |e: &crate::vp::VpEstimate| {
        json!({
            "point": point_json(e.point, size),
            "score": e.score,
            "median_cell": e.median_cell,
            "score_ratio": e.score_ratio(),
            "inliers": e.inliers,
            "votes": e.votes,
        })
    };
    json!({
        "version": "autocalib-diagnostics/1",
        "calib_source": source,
        "focal_px": r.calibration.focal,
        "segments": r.diagnostics.as_ref().map(|d| d.segments),
        "edgelets": r.diagnostics.as_ref().map(|d| d.edgelets),
        "vp1": r.diagnostics.as_ref().map(|d| vp(&d.vp1)),
        "vp2": r.diagnostics.as_ref().map(|d| vp(&d.vp2)),
        "manual_fit": r.manual_fit.map(|f| json!({
            "vp2": point_json(f.vp2, size),
            "objective": f.objective,
            "candidates": f.candidates,
            "low_confidence": f.low_confidence,
        })),
    })
}

fn scale_diagnostics(s: &ScaleResult) -> serde_json::Value {
    json!({
        "version": "autocalib-scale/1",
        "scale_source": s.source,
        "lambda": s.lambda,
        "estimate": s.estimate.as_ref().map(|e| json!({
            "lambda_raw": e.lambda,
            "lambda_reg": e.lambda_reg,
            "regression": e.regression,
            "lambda0": e.lambda0,
            "instances": e.instances,
            "samples": e.samples,
            "bandwidth_ln": e.kde.bandwidth,
        })),
    })
}

fn density_csv(s: &ScaleResult) -> Option<String> {
    let e = s.estimate.as_ref()?;
    let mut out = String::from("lambda,density\n");
    for (l, d) in &e.kde.density {
        out.push_str(&format!("{l},{d}\n"));
    }
    Some(out)
}

/// Calibrates, exporting the per-frame edgelets of an automatic run so the
/// bundle can later be calibrated without its frames.
fn calibrate_with_export(
    scene: &Scene,
    data: &mut SceneData<'_>,
    source: CalibSource,
    opts: &PipelineOptions,
    out: &Path,
) -> Result<CalibrationResult> {
    if source == CalibSource::Auto && matches!(data.edgelets, EdgeletInput::Frames { .. }) {
        let per_frame = per_frame_edgelets(&data.edgelets, &opts.edgelets)?;
        let text = io::edgelets_jsonl(&scene.frame_labels(), &per_frame, scene.image_size())?;
        data.edgelets = EdgeletInput::PerFrame(per_frame);
        let r = calibrate_scene(data, source, opts)?;
        io::write_atomic(&out.join(io::EDGELETS_FILE), text.as_bytes())?;
        return Ok(r);
    }
    calibrate_scene(data, source, opts)
}

fn write_scale(out: &Path, s: &ScaleResult) -> Result<()> {
    io::write_json(&out.join("scale.json"), &scale_diagnostics(s))?;
    if let Some(csv) = density_csv(s) {
        io::write_atomic(&out.join("density.csv"), csv.as_bytes())?;
    }
    Ok(())
}

fn write_measurement(out: &Path, size: ImageSize, tracking: &TrackingResult, m: &MeasurementResult) -> Result<()> {
    io::write_atomic(&out.join("speeds.csv"), speeds_csv(&m.speeds).as_bytes())?;
    io::write_atomic(&out.join("tracks.jsonl"), io::tracks_jsonl(tracking, size)?.as_bytes())?;
    if let Some(c) = &m.counting {
        let mut v = serde_json::to_value(c)?;
        v["version"] = json!("autocalib-counting/1");
        io::write_json(&out.join("counting.json"), &v)?;
    }
    Ok(())
}

fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let opts = options(&a.tuning)?;
    let scale_source = a.scale_source.or(a.models.models.as_ref().map(|_| ScaleArg::Bbox));
    let ctx_models = match scale_source {
        Some(_) => Some(load_models(a.models.models.as_deref())?),
        None => None,
    };
    let regression = load_regression(a.models.regression.as_deref())?;
    let scene = Scene::load(&a.scene)?;
    let mut data = scene.data();
    let source = CalibSource::from(a.calib_source);
    let result = calibrate_with_export(&scene, &mut data, source, &opts, &a.scene.out)?;
    let mut calibration = result.calibration;
    if let (Some(s), Some(models)) = (scale_source, &ctx_models) {
        let ctx = ScaleContext { models, regression };
        let tracking = track_scene(&data.detections, &calibration, &opts.tracker);
        let scale = scene_scale(&data, &result, &tracking, s.into(), &ctx, &opts)?;
        calibration = calibration.with_scale(scale.lambda);
        write_scale(&a.scene.out, &scale)?;
    }
    io::write_json(&a.scene.out.join("diagnostics.json"), &calibration_diagnostics(&result, source))?;
    io::write_calibration(&a.scene.out.join("calibration.json"), &calibration)
}

fn infer_scale(a: &InferScaleArgs) -> Result<()> {
    let opts = options(&a.tuning)?;
    let models = load_models(a.models.models.as_deref())?;
    let regression = load_regression(a.models.regression.as_deref())?;
    let scene = Scene::load(&a.scene)?;
    let calibration = read_calibration_for(&a.calibration, scene.image_size())?.without_scale();
    let data = scene.data();
    let result = CalibrationResult {
        calibration,
        diagnostics: None,
        manual_fit: None,
    };
    let tracking = track_scene(&data.detections, &calibration, &opts.tracker);
    let ctx = ScaleContext {
        models: &models,
        regression,
    };
    let scale = scene_scale(&data, &result, &tracking, a.scale_source.into(), &ctx, &opts)?;
    write_scale(&a.scene.out, &scale)?;
    io::write_calibration(&a.scene.out.join("calibration.json"), &calibration.with_scale(scale.lambda))
}

fn measure(a: &MeasureArgs) -> Result<()> {
    let opts = options(&a.tuning)?;
    let scene = Scene::load(&a.scene)?;
    let calibration = read_calibration_for(&a.calibration, scene.image_size())?;
    if calibration.scale.is_none() {
        return Err(Error::MissingScale);
    }
    let data = scene.data();
    let tracking = track_scene(&data.detections, &calibration, &opts.tracker);
    let m = measure_scene(&data, &calibration, &tracking, opts.tau);
    write_measurement(&a.scene.out, scene.image_size(), &tracking, &m)
}

/// `name=path` or a bare path named after its file stem.
fn named_path(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(spec);
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (name, p)
        }
    }
}

fn parse_system(spec: &str) -> Result<(CalibArg, ScaleArg)> {
    let bad = || Error::ConfigInvalid(format!("system {spec:?} is not of the form calib:scale"));
    let (c, s) = spec.split_once(':').ok_or_else(bad)?;
    let c = CalibArg::from_str(c, true).map_err(|_| bad())?;
    let s = ScaleArg::from_str(s, true).map_err(|_| bad())?;
    Ok((c, s))
}

fn system_name(c: CalibArg, s: ScaleArg) -> String {
    let name = |v: Option<clap::builder::PossibleValue>| v.map(|v| v.get_name().to_string()).unwrap_or_default();
    format!("{}:{}", name(c.to_possible_value()), name(s.to_possible_value()))
}

/// Runs the sources on the scene and returns the row plus the intermediate results.
fn run_system(
    data: &SceneData<'_>,
    calib: CalibrationResult,
    scale_source: Option<ScaleSource>,
    ctx: &ScaleContext<'_>,
    opts: &PipelineOptions,
) -> Result<(CameraCalibration, Option<ScaleResult>, TrackingResult, MeasurementResult)> {
    let tracking = track_scene(&data.detections, &calib.calibration, &opts.tracker);
    let (scaled, scale) = match scale_source {
        Some(s) => {
            let r = scene_scale(data, &calib, &tracking, s, ctx, opts)?;
            (calib.calibration.with_scale(r.lambda), Some(r))
        }
        None => (calib.calibration, None),
    };
    let m = measure_scene(data, &scaled, &tracking, opts.tau);
    Ok((scaled, scale, tracking, m))
}

fn report_is_empty(r: &SystemReport) -> bool {
    r.ratio.is_none() && r.distance_flow.is_none() && r.distance_all.is_none() && r.speed.is_none()
}

fn write_report(out: &Path, rows: &BTreeMap<String, SystemReport>, histograms: &BTreeMap<String, String>) -> Result<()> {
    for (name, csv) in histograms {
        let file: String = name
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        io::write_atomic(&out.join(format!("speed_histogram_{file}.csv")), csv.as_bytes())?;
    }
    io::write_report(&out.join("report.json"), rows)?;
    if rows.values().all(report_is_empty) {
        return Err(Error::EmptyMatches);
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    if a.calibration.is_empty() && a.system.is_empty() {
        return Err(Error::ConfigInvalid("nothing to evaluate: give --calibration or --system".into()));
    }
    let opts = options(&a.tuning)?;
    let systems: Vec<(CalibArg, ScaleArg)> = a.system.iter().map(|s| parse_system(s)).collect::<Result<_>>()?;
    let files: Vec<(String, PathBuf)> = a.calibration.iter().map(|s| named_path(s)).collect();
    let models = load_models(a.models.models.as_deref())?;
    let regression = load_regression(a.models.regression.as_deref())?;
    let scene = Scene::load(&a.scene)?;
    let size = scene.image_size();
    let calibrations: Vec<(String, CameraCalibration)> = files
        .iter()
        .map(|(n, p)| Ok((n.clone(), read_calibration_for(p, size)?)))
        .collect::<Result<_>>()?;
    let data = scene.data();
    let ctx = ScaleContext {
        models: &models,
        regression,
    };
    let mut rows = BTreeMap::new();
    let mut histograms = BTreeMap::new();
    let mut add = |name: String, calib: &CameraCalibration, m: &MeasurementResult| {
        if let Some(r) = &m.speed_error {
            histograms.insert(name.clone(), histogram_csv(&r.histogram));
        }
        rows.insert(name, evaluate_system(calib, scene.truth_markings(), m));
    };
    for (name, calibration) in calibrations {
        let c = CalibrationResult {
            calibration,
            diagnostics: None,
            manual_fit: None,
        };
        let (scaled, _, _, m) = run_system(&data, c, None, &ctx, &opts)?;
        add(name, &scaled, &m);
    }
    for (c, s) in systems {
        let calib = calibrate_scene(&data, c.into(), &opts)?;
        let (scaled, _, _, m) = run_system(&data, calib, Some(s.into()), &ctx, &opts)?;
        add(system_name(c, s), &scaled, &m);
    }
    write_report(&a.scene.out, &rows, &histograms)
}

fn run(a: &RunArgs) -> Result<()> {
    let opts = options(&a.tuning)?;
    let models = load_models(a.models.models.as_deref())?;
    let regression = load_regression(a.models.regression.as_deref())?;
    let scene = Scene::load(&a.scene)?;
    let size = scene.image_size();
    let out = &a.scene.out;
    let mut data = scene.data();
    let source = CalibSource::from(a.calib_source);
    let calib = calibrate_with_export(&scene, &mut data, source, &opts, out)?;
    io::write_json(&out.join("diagnostics.json"), &calibration_diagnostics(&calib, source))?;
    let ctx = ScaleContext {
        models: &models,
        regression,
    };
    let (scaled, scale, tracking, m) = run_system(&data, calib, Some(a.scale_source.into()), &ctx, &opts)?;
    if let Some(s) = &scale {
        write_scale(out, s)?;
    }
    io::write_calibration(&out.join("calibration.json"), &scaled)?;
    write_measurement(out, size, &tracking, &m)?;
    if scene.truth_markings().is_some() || !data.passes.is_empty() {
        let name = system_name(a.calib_source, a.scale_source);
        let mut rows = BTreeMap::new();
        let mut histograms = BTreeMap::new();
        if let Some(r) = &m.speed_error {
            histograms.insert(name.clone(), histogram_csv(&r.histogram));
        }
        rows.insert(name, evaluate_system(&scaled, scene.truth_markings(), &m));
        write_report(out, &rows, &histograms)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(exit_code(&Error::ConfigInvalid("x".into())), 2);
        assert_eq!(
            exit_code(&Error::InsufficientData {
                what: "segments",
                got: 0,
                need: 50
            }),
            3
        );
        assert_eq!(exit_code(&Error::AllMasked), 4);
        assert_eq!(exit_code(&Error::EmptyMatches), 5);
    }

    #[test]
    fn system_specs() {
        assert_eq!(parse_system("auto:bbox+reg").unwrap(), (CalibArg::Auto, ScaleArg::BboxReg));
        assert_eq!(parse_system("oracle:oracle").unwrap(), (CalibArg::Oracle, ScaleArg::Oracle));
        assert!(parse_system("auto").is_err());
        assert!(parse_system("auto:nope").is_err());
        assert_eq!(system_name(CalibArg::Manual, ScaleArg::Speed), "manual:speed");
    }

    #[test]
    fn named_paths() {
        assert_eq!(named_path("a=x/c.json"), ("a".into(), PathBuf::from("x/c.json")));
        assert_eq!(named_path("x/auto.json"), ("auto".into(), PathBuf::from("x/auto.json")));
    }

    #[test]
    fn defaults_match_the_documented_flags() {
        let cli = Cli::try_parse_from(["autocalib", "run", "--scene", "s", "--out", "o"]).unwrap();
        let Command::Run(r) = cli.command else { panic!() };
        assert_eq!(r.tuning.tau, 5);
        assert_eq!(r.tuning.iou_threshold, 0.85);
        assert_eq!(r.tuning.keep_fraction, 0.25);
        assert_eq!(r.tuning.diamond_resolution, 421);
        assert_eq!(r.calib_source, CalibArg::Auto);
        assert_eq!(r.scale_source, ScaleArg::Bbox);
    }
}
