//! Wireframe vehicle models.
//!
//! Vehicle frame: x forward, y left, z up, meters, origin at the center of
//! the base. The front and rear anchors lie on the base at `x = ±length/2`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_VERSION: &str = "autocalib-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireframeModel {
    pub version: String,
    pub id: String,
    pub length_m: f64,
    pub vertices: Vec<[f64; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub anchor_front: usize,
    pub anchor_rear: usize,
}

/// Dimensions of a box-cab model: a full-footprint lower body with a
/// narrower-or-equal cabin on top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCabDims {
    pub length: f64,
    pub width: f64,
    pub body_height: f64,
    pub total_height: f64,
    /// Cabin extent along x, measured from the rear end.
    pub cab_start: f64,
    pub cab_end: f64,
    pub cab_width: f64,
}

fn push_box(v: &mut Vec<[f64; 3]>, e: &mut Vec<[usize; 2]>, x: [f64; 2], y: [f64; 2], z: [f64; 2]) {
    let base = v.len();
    for &zz in &z {
        for &yy in &y {
            for &xx in &x {
                v.push([xx, yy, zz]);
            }
        }
    }
    // Corner index bits: x | y << 1 | z << 2.
    for i in 0..8usize {
        for bit in [1usize, 2, 4] {
            if i & bit == 0 {
                e.push([base + i, base + (i | bit)]);
            }
        }
    }
}

impl WireframeModel {
    pub fn box_cab(id: &str, d: BoxCabDims) -> Self {
        let (hl, hw) = (d.length / 2.0, d.width / 2.0);
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        push_box(&mut vertices, &mut edges, [-hl, hl], [-hw, hw], [0.0, d.body_height]);
        push_box(
            &mut vertices,
            &mut edges,
            [-hl + d.cab_start, -hl + d.cab_end],
            [-d.cab_width / 2.0, d.cab_width / 2.0],
            [d.body_height, d.total_height],
        );
        let anchor_front = vertices.len();
        vertices.push([hl, 0.0, 0.0]);
        vertices.push([-hl, 0.0, 0.0]);
        Self {
            version: MODEL_VERSION.into(),
            id: id.into(),
            length_m: d.length,
            vertices,
            edges,
            anchor_front,
            anchor_rear: anchor_front + 1,
        }
    }

    pub fn cuboid(id: &str, length: f64, width: f64, height: f64) -> Self {
        let (hl, hw) = (length / 2.0, width / 2.0);
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        push_box(&mut vertices, &mut edges, [-hl, hl], [-hw, hw], [0.0, height]);
        let anchor_front = vertices.len();
        vertices.push([hl, 0.0, 0.0]);
        vertices.push([-hl, 0.0, 0.0]);
        Self {
            version: MODEL_VERSION.into(),
            id: id.into(),
            length_m: length,
            vertices,
            edges,
            anchor_front,
            anchor_rear: anchor_front + 1,
        }
    }

    /// Station wagon, 4.66 × 1.80 × 1.47 m.
    pub fn combi() -> Self {
        Self::box_cab(
            "combi",
            BoxCabDims {
                length: 4.66,
                width: 1.80,
                body_height: 0.86,
                total_height: 1.47,
                cab_start: 0.30,
                cab_end: 3.05,
                cab_width: 1.70,
            },
        )
    }

    /// Sedan, 4.48 × 1.78 × 1.42 m.
    pub fn sedan() -> Self {
        Self::box_cab(
            "sedan",
            BoxCabDims {
                length: 4.48,
                width: 1.78,
                body_height: 0.80,
                total_height: 1.42,
                cab_start: 1.00,
                cab_end: 3.05,
                cab_width: 1.66,
            },
        )
    }

    /// Van used for vehicles without a fine-grained class.
    pub fn van() -> Self {
        Self::cuboid("other", 5.10, 2.00, 2.20)
    }

    pub fn builtin(id: &str) -> Option<Self> {
        match id {
            "combi" => Some(Self::combi()),
            "sedan" => Some(Self::sedan()),
            "other" | "van" => Some(Self::van()),
            _ => None,
        }
    }

    /// Axis-aligned boxes the model is built from: every run of eight
    /// consecutive vertices laid out with corner index `x | y << 1 | z << 2`.
    pub fn boxes(&self) -> Vec<[usize; 8]> {
        let mut out = Vec::new();
        let mut i = 0;
        while i + 8 <= self.vertices.len() {
            let v = &self.vertices[i..i + 8];
            let is_box = (0..8)
                .all(|k| (0..3).all(|axis| v[k][axis] == if k & (1 << axis) == 0 { v[0][axis] } else { v[1 << axis][axis] }))
                && (0..3).all(|axis| v[0][axis] < v[1 << axis][axis]);
            if is_box {
                out.push(std::array::from_fn(|k| i + k));
                i += 8;
            } else {
                i += 1;
            }
        }
        out
    }

    /// Uniformly scaled copy (all dimensions multiplied by `factor`).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        m.length_m *= factor;
        for v in &mut m.vertices {
            for c in v.iter_mut() {
                *c *= factor;
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::InvalidInput(format!("model {:?}: {r}", self.id)));
        if self.version != MODEL_VERSION {
            return bad("unsupported version");
        }
        if !(self.length_m > 0.0) {
            return bad("length must be positive");
        }
        let n = self.vertices.len();
        if self.anchor_front >= n || self.anchor_rear >= n {
            return bad("anchor index out of range");
        }
        if self.edges.iter().any(|e| e[0] >= n || e[1] >= n) {
            return bad("edge references a missing vertex");
        }
        let zmin = self.vertices.iter().map(|v| v[2]).fold(f64::INFINITY, f64::min);
        for a in [self.anchor_front, self.anchor_rear] {
            if (self.vertices[a][2] - zmin).abs() > 1e-6 {
                return bad("anchors must lie on the base");
            }
        }
        Ok(())
    }

    pub fn anchors(&self) -> ([f64; 3], [f64; 3]) {
        (self.vertices[self.anchor_front], self.vertices[self.anchor_rear])
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        m.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}
