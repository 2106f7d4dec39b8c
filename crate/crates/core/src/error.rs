use thiserror::Error;

/// Errors produced by the calibration and measurement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// The vanishing point pair implies an imaginary focal length.
    #[error("vanishing points imply an imaginary focal length (radicand {radicand})")]
    NonPositiveRadicand { radicand: f64 },

    #[error("vanishing points are degenerate (coincident or not finite)")]
    DegenerateVps,

    /// The image location lies on or above the horizon and cannot be measured.
    #[error("point ({x:.3}, {y:.3}) lies on or above the horizon")]
    HorizonPoint { x: f64, y: f64 },

    #[error("calibration has no scene scale")]
    MissingScale,

    #[error("accumulator holds no votes")]
    EmptyAccumulator,

    #[error("every accumulator candidate is masked out")]
    AllMasked,

    #[error("patch has no gradient energy")]
    DegeneratePatch,

    #[error("insufficient data for {what}: got {got}, need at least {need}")]
    InsufficientData { what: &'static str, got: usize, need: usize },

    #[error("hull is degenerate (fewer than 3 non-collinear vertices)")]
    DegenerateHull,

    #[error("vanishing point lies inside the hull; tangents are undefined")]
    TangentFailure,

    #[error("no tracked vehicle belongs to a known model class")]
    NoModelsMatched,

    #[error("no scale samples to estimate a density from")]
    EmptySamples,

    #[error("regression is degenerate (all estimates equal)")]
    DegenerateFit,

    #[error("track has {len} samples, need at least {need}")]
    TooShortTrack { len: usize, need: usize },

    #[error("no matched measurement pairs")]
    EmptyMatches,

    #[error("lines are parallel; intersection is not determined")]
    ParallelLines,

    #[error("no feasible grid candidate")]
    EmptyFeasibleGrid,

    #[error("markings lack the segments required for this metric")]
    EmptyMarkings,

    #[error("rendered point lies behind the camera")]
    BehindCamera,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }
}
