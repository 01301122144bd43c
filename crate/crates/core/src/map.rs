//! Map document: the on-disk description of the walkable environment.
//!
//! The document is JSON with a `format` version, a node list, a directed edge
//! list, goal positions (used by the grid baseline) and optional semantic
//! regions. Units are meters and meters per second throughout.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAP_FORMAT_VERSION: u32 = 1;

/// Default switch distance applied to edges that omit `d`.
pub const DEFAULT_SWITCH_DISTANCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("cannot read map file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed map document {path} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported map format version {0} (expected {MAP_FORMAT_VERSION})")]
    UnsupportedFormat(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Sidewalk,
    Crosswalk,
}

impl EdgeKind {
    /// Strip width used when an edge does not carry its own.
    pub fn default_width(self) -> f64 {
        match self {
            EdgeKind::Sidewalk => 2.0,
            EdgeKind::Crosswalk => 3.0,
        }
    }
}

/// Semantic class of a map region (and of a grid cell).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticClass {
    Road,
    Sidewalk,
    Crosswalk,
    Obstacle,
}

impl SemanticClass {
    /// Rasterization priority: crosswalk > sidewalk > road > obstacle.
    pub fn priority(self) -> u8 {
        match self {
            SemanticClass::Crosswalk => 3,
            SemanticClass::Sidewalk => 2,
            SemanticClass::Road => 1,
            SemanticClass::Obstacle => 0,
        }
    }

    pub fn is_pedestrian_area(self) -> bool {
        matches!(self, SemanticClass::Sidewalk | SemanticClass::Crosswalk)
    }
}

impl From<EdgeKind> for SemanticClass {
    fn from(kind: EdgeKind) -> Self {
        match kind {
            EdgeKind::Sidewalk => SemanticClass::Sidewalk,
            EdgeKind::Crosswalk => SemanticClass::Crosswalk,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub kind: EdgeKind,
    pub v_ref: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Strip width for rasterization; defaults per kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub class: SemanticClass,
    /// Closed polygon, vertices in order (the closing vertex is implicit).
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub format: u32,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub goals: Vec<GoalSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionSpec>,
    /// Class of cells not covered by any region or strip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<SemanticClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

impl MapDocument {
    pub fn from_json_str(text: &str) -> Result<Self, MapError> {
        Self::parse_named(text, "<memory>")
    }

    fn parse_named(text: &str, name: &str) -> Result<Self, MapError> {
        let doc: MapDocument = serde_json::from_str(text).map_err(|e| MapError::Parse {
            path: name.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if doc.format != MAP_FORMAT_VERSION {
            return Err(MapError::UnsupportedFormat(doc.format));
        }
        Ok(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MapError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_named(&text, &path.display().to_string())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("map document is always serializable")
    }

    /// Axis-aligned box around every node, goal and region vertex, padded by
    /// the widest strip so rasterized strips are not clipped.
    pub fn bounding_box(&self) -> Bounds {
        if let Some(b) = self.bounds {
            return b;
        }
        let mut b = Bounds {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        let mut grow = |x: f64, y: f64| {
            b.min_x = b.min_x.min(x);
            b.min_y = b.min_y.min(y);
            b.max_x = b.max_x.max(x);
            b.max_y = b.max_y.max(y);
        };
        self.nodes.iter().for_each(|n| grow(n.x, n.y));
        self.goals.iter().for_each(|g| grow(g.x, g.y));
        self.regions
            .iter()
            .flat_map(|r| r.polygon.iter())
            .for_each(|p| grow(p[0], p[1]));
        let pad = self
            .edges
            .iter()
            .map(|e| e.width.unwrap_or(e.kind.default_width()) / 2.0)
            .fold(0.0, f64::max);
        Bounds {
            min_x: b.min_x - pad,
            min_y: b.min_y - pad,
            max_x: b.max_x + pad,
            max_y: b.max_y + pad,
        }
    }
}
