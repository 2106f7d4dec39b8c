//! Traffic camera auto-calibration and vehicle speed measurement.
//!
//! The pipeline recovers a camera's focal length, orientation and scene
//! scale from the motion of vehicles: the first vanishing point from point
//! trajectories, the second from oriented edges, the scale from aligning
//! wireframe vehicle models with detected boxes. Speeds then follow from
//! tracked reference points projected onto the road plane.
//!
//! Image coordinates throughout the library are centered on the principal
//! point (x right, y down); conversions from top-left pixel coordinates
//! happen only when files are read or written.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod cli;
pub mod diamond;
pub mod edgelets;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod manual;
pub mod pipeline;
pub mod raster;
pub mod scale;
pub mod sim;
pub mod speed;
pub mod tracking;
pub mod vp;
pub mod wireframe;

pub use camera::{CameraCalibration, GroundPoint, RoadPlane};
pub use error::{Error, Result};
pub use geometry::{BBox, HomPoint, ImagePoint, ImageSize, Line2};
