//! Relic packages: geometry, trigger points with dialogs, tools and session rules.
//!
//! A package is one JSON document. Unknown keys are rejected. Loading always
//! validates, so an [`ArtifactSpec`] in hand is known to be playable.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sdf::{SdfError, SdfNode, Vec3};
use crate::voxel::{Brush, BrushError, BrushShape, Falloff, GridError, GridParams};

pub const DEFAULT_TRIGGER_COUNT: usize = 3;
pub const DEFAULT_REVEAL_MARGIN: f64 = 0.06;
pub const DEFAULT_CLOD_EDGE: f64 = 2.0;
pub const DEFAULT_CELL_SIZE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogPayload {
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerPoint {
    pub id: String,
    pub position: [f64; 3],
    pub dialog: DialogPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub name: String,
    pub shape: BrushShape,
    pub strength: f64,
    pub falloff: Falloff,
}

impl ToolSpec {
    pub fn brush(&self) -> Brush {
        Brush {
            shape: self.shape,
            strength: self.strength,
            falloff: self.falloff,
        }
    }

    pub fn hammer() -> Self {
        ToolSpec {
            name: "hammer".into(),
            shape: BrushShape::Sphere { radius: 0.05 },
            strength: 1.0,
            falloff: Falloff::Hard,
        }
    }

    pub fn shovel() -> Self {
        ToolSpec {
            name: "shovel".into(),
            shape: BrushShape::Box {
                half_extents: [0.10, 0.06, 0.015],
            },
            strength: 1.0,
            falloff: Falloff::Hard,
        }
    }
}

/// Timer, health and completion rules for one session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionParams {
    pub time_limit_s: f64,
    pub max_health: u32,
    pub hit_penalty: u32,
    pub completion_exposure: f64,
    pub hit_cooldown_s: f64,
}

impl Default for SessionParams {
    fn default() -> Self {
        SessionParams {
            time_limit_s: 420.0,
            max_health: 40,
            hit_penalty: 1,
            completion_exposure: 0.95,
            hit_cooldown_s: 0.25,
        }
    }
}

impl SessionParams {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let bad = |what: &str| Err(ValidationError::SessionParams(what.to_string()));
        if !(self.time_limit_s > 0.0 && self.time_limit_s.is_finite()) {
            return bad("time_limit_s must be positive");
        }
        if self.max_health < 1 {
            return bad("max_health must be at least 1");
        }
        if self.hit_penalty < 1 {
            return bad("hit_penalty must be at least 1");
        }
        if !(self.completion_exposure > 0.0 && self.completion_exposure <= 1.0) {
            return bad("completion_exposure must be in (0, 1]");
        }
        if !(self.hit_cooldown_s >= 0.0 && self.hit_cooldown_s.is_finite()) {
            return bad("hit_cooldown_s must be non-negative");
        }
        Ok(())
    }
}

fn default_trigger_count() -> usize {
    DEFAULT_TRIGGER_COUNT
}
fn default_reveal_margin() -> f64 {
    DEFAULT_REVEAL_MARGIN
}
fn default_clod_edge() -> f64 {
    DEFAULT_CLOD_EDGE
}
fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactSpec {
    pub name: String,
    pub geometry: SdfNode,
    pub triggers: Vec<TriggerPoint>,
    pub completion_dialog: DialogPayload,
    #[serde(default = "default_clod_edge")]
    pub clod_edge: f64,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    pub tools: Vec<ToolSpec>,
    #[serde(default)]
    pub session: SessionParams,
    /// Expected number of triggers; packages set this to deviate from three.
    #[serde(default = "default_trigger_count")]
    pub trigger_count: usize,
    /// Maximum trigger distance from the relic surface, in meters.
    #[serde(default = "default_reveal_margin")]
    pub reveal_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("relic name is empty")]
    EmptyName,
    #[error("geometry: {0}")]
    Geometry(#[from] SdfError),
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("geometry is not strictly inside the clod (touches boundary cell {0:?})")]
    GeometryTouchesBoundary([usize; 3]),
    #[error("expected {expected} triggers (one per dialog), found {found}; set trigger_count to override")]
    TriggerCount { expected: usize, found: usize },
    #[error("duplicate trigger id {0:?}")]
    DuplicateTrigger(String),
    #[error("trigger {0:?} is outside the clod")]
    TriggerOutsideClod(String),
    #[error("trigger inside artifact: {0:?}")]
    TriggerInsideArtifact(String),
    #[error("trigger {id:?} is {distance:.4} m from the artifact surface, beyond the {margin} m reveal margin")]
    TriggerTooFar { id: String, distance: f64, margin: f64 },
    #[error("trigger {0:?} lies in a cell occupied by the artifact and can never be uncovered")]
    TriggerCellNotCarvable(String),
    #[error("dialog body is empty for {0}")]
    EmptyDialog(String),
    #[error("at least one tool is required")]
    NoTools,
    #[error("duplicate tool name {0:?}")]
    DuplicateTool(String),
    #[error("tool {name:?}: {source}")]
    Tool { name: String, source: BrushError },
    #[error("session params: {0}")]
    SessionParams(String),
    #[error("reveal_margin must be positive")]
    RevealMargin,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("parse error at {path} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid package: {0}")]
    Invalid(#[from] ValidationError),
}

/// Parses and validates an artifact package.
pub fn load_spec(document: &str) -> Result<ArtifactSpec, CatalogError> {
    let mut de = serde_json::Deserializer::from_str(document);
    let spec: ArtifactSpec = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CatalogError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| CatalogError::Parse {
        path: ".".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

impl ArtifactSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn spec_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn grid_params(&self) -> Result<GridParams, GridError> {
        GridParams::for_clod(self.clod_edge, self.cell_size)
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.name.trim().is_empty() {
            return Err(ValidationError::EmptyName);
        }
        self.geometry.validate()?;
        let params = self.grid_params()?;
        self.session.validate()?;
        if !(self.reveal_margin > 0.0 && self.reveal_margin.is_finite()) {
            return Err(ValidationError::RevealMargin);
        }

        if self.tools.is_empty() {
            return Err(ValidationError::NoTools);
        }
        let mut names = HashSet::new();
        for tool in &self.tools {
            if !names.insert(tool.name.as_str()) {
                return Err(ValidationError::DuplicateTool(tool.name.clone()));
            }
            tool.brush().validate().map_err(|source| ValidationError::Tool {
                name: tool.name.clone(),
                source,
            })?;
        }

        if self.completion_dialog.body.trim().is_empty() {
            return Err(ValidationError::EmptyDialog("completion dialog".into()));
        }
        if self.triggers.len() != self.trigger_count {
            return Err(ValidationError::TriggerCount {
                expected: self.trigger_count,
                found: self.triggers.len(),
            });
        }

        self.check_geometry_inside(&params)?;

        let half = self.clod_edge / 2.0;
        let mut ids = HashSet::new();
        for t in &self.triggers {
            if !ids.insert(t.id.as_str()) {
                return Err(ValidationError::DuplicateTrigger(t.id.clone()));
            }
            if t.dialog.body.trim().is_empty() {
                return Err(ValidationError::EmptyDialog(format!("trigger {:?}", t.id)));
            }
            let p = Vec3::from(t.position);
            if !p.iter().all(|c| c.is_finite() && c.abs() < half) {
                return Err(ValidationError::TriggerOutsideClod(t.id.clone()));
            }
            let d = self.geometry.eval(&p);
            if d <= 0.0 {
                return Err(ValidationError::TriggerInsideArtifact(t.id.clone()));
            }
            if d > self.reveal_margin {
                return Err(ValidationError::TriggerTooFar {
                    id: t.id.clone(),
                    distance: d,
                    margin: self.reveal_margin,
                });
            }
            let cell = params
                .cell_of_point(&p)
                .ok_or_else(|| ValidationError::TriggerOutsideClod(t.id.clone()))?;
            let center = params.cell_center(cell.map(|c| c as i64));
            if center.iter().any(|c| c.abs() > half) {
                return Err(ValidationError::TriggerOutsideClod(t.id.clone()));
            }
            if self.geometry.eval(&center) <= 0.0 {
                return Err(ValidationError::TriggerCellNotCarvable(t.id.clone()));
            }
        }
        Ok(())
    }

    /// Samples the SDF on the outermost cell layer, which must hold no artifact cell.
    fn check_geometry_inside(&self, params: &GridParams) -> Result<(), ValidationError> {
        let n = params.dims;
        for z in 0..n[2] {
            for y in 0..n[1] {
                for x in 0..n[0] {
                    let on_boundary = x == 0
                        || y == 0
                        || z == 0
                        || x + 1 == n[0]
                        || y + 1 == n[1]
                        || z + 1 == n[2];
                    if !on_boundary {
                        continue;
                    }
                    let c = params.cell_center([x as i64, y as i64, z as i64]);
                    if self.geometry.eval(&c) <= 0.0 {
                        return Err(ValidationError::GeometryTouchesBoundary([x, y, z]));
                    }
                }
            }
        }
        Ok(())
    }
}

const ARHAT_JSON: &str = include_str!("../relics/arhat.json");
const GOLD_MASK_JSON: &str = include_str!("../relics/gold_mask.json");

/// Raw package documents of the bundled relics, by name.
pub fn builtin_packages() -> [(&'static str, &'static str); 2] {
    [("arhat", ARHAT_JSON), ("gold_mask", GOLD_MASK_JSON)]
}

/// The two bundled relics, `arhat` and `gold_mask`.
pub fn builtin_relics() -> Vec<ArtifactSpec> {
    builtin_packages()
        .iter()
        .map(|(name, doc)| {
            load_spec(doc).unwrap_or_else(|e| panic!("bundled relic {name} is invalid: {e}"))
        })
        .collect()
}

pub fn builtin_relic(name: &str) -> Option<ArtifactSpec> {
    builtin_relics().into_iter().find(|s| s.name == name)
}
