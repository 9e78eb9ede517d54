//! Excavation session rules.
//!
//! A [`Session`] owns one clod, applies strokes in timestamp order and keeps
//! an ordered event log. Every accepted input is also recorded so the whole
//! session can be replayed bit-for-bit (see [`replay`]).

pub mod replay;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ArtifactSpec, DialogPayload, SessionParams, ValidationError};
use crate::mesher::{mesh_artifact_in, MeshChunk, MeshError};
use crate::voxel::{CarveResult, GridError, Pose, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    Running,
    Completed,
    TimeUp,
}

impl SessionStatus {
    pub fn is_terminal(self) -> bool {
        self != SessionStatus::Running
    }
}

/// One tool application at session time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub t: f64,
    pub pose: Pose,
}

impl Stroke {
    pub fn new(t: f64, pose: Pose) -> Self {
        Stroke { t, pose }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub status: SessionStatus,
    pub duration: f64,
    pub hits_taken: u32,
    pub health_remaining: u32,
    pub exposure: f64,
    pub strokes: u64,
    pub triggers_revealed: usize,
    pub removed_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    StrokeApplied {
        tool: String,
        removed_volume: f64,
        cells_changed: usize,
        cells_emptied: usize,
        artifact_contact: bool,
    },
    Hit {
        contact_point: [f64; 3],
        health_after: u32,
    },
    TriggerRevealed {
        trigger_id: String,
        dialog: DialogPayload,
    },
    ExposureMilestone {
        decile: u8,
    },
    Completed {
        dialog: DialogPayload,
        stats: SessionReport,
    },
    TimeUp {
        stats: SessionReport,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub timestamp: f64,
    pub event: EventKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("invalid session params: {0}")]
    Params(#[from] ValidationError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("session is not running")]
    NotRunning,
    #[error("session is still running")]
    StillRunning,
    #[error("time {t} is earlier than the session clock {clock}")]
    NonMonotoneTime { t: f64, clock: f64 },
    #[error("stroke pose must be finite")]
    BadPose,
}

impl SessionError {
    /// Short machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Params(_) => "BAD_PARAMS",
            SessionError::Grid(_) | SessionError::Mesh(_) => "BAD_ARTIFACT",
            SessionError::UnknownTool(_) => "UNKNOWN_TOOL",
            SessionError::NotRunning => "NOT_RUNNING",
            SessionError::StillRunning => "STILL_RUNNING",
            SessionError::NonMonotoneTime { .. } => "NON_MONOTONE_TIME",
            SessionError::BadPose => "BAD_POSE",
        }
    }
}

/// Mutable per-session rule state.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub status: SessionStatus,
    pub clock: f64,
    pub health: u32,
    pub exposure: f64,
    pub revealed_trigger_ids: Vec<String>,
    pub active_tool: String,
    pub stroke_count: u64,
    pub hits: u32,
    pub last_hit_time: Option<f64>,
    last_decile: u8,
    pub event_log: Vec<Event>,
}

/// A recorded session input, replayed in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputRecord {
    Stroke { t: f64, payload: Pose },
    Tick { t: f64 },
    SelectTool { t: f64, payload: ToolChoice },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolChoice {
    pub tool: String,
}

pub struct Session {
    spec: Arc<ArtifactSpec>,
    spec_hash: String,
    params: SessionParams,
    seed: u64,
    grid: VoxelGrid,
    artifact_mesh: Arc<Vec<MeshChunk>>,
    trigger_cells: Vec<[usize; 3]>,
    state: SessionState,
    inputs: Vec<InputRecord>,
}

impl Session {
    /// Starts a session with the spec's own rules.
    pub fn start(spec: impl Into<Arc<ArtifactSpec>>, seed: u64) -> Result<Self, SessionError> {
        let spec = spec.into();
        let params = spec.session;
        Self::start_with_params(spec, params, seed)
    }

    /// Starts a session with overridden rules; the override is recorded in the replay header.
    pub fn start_with_params(
        spec: impl Into<Arc<ArtifactSpec>>,
        params: SessionParams,
        seed: u64,
    ) -> Result<Self, SessionError> {
        let spec = spec.into();
        params.validate()?;
        let grid = VoxelGrid::new(spec.clod_edge, spec.cell_size, &spec.geometry)?;
        let exposure = grid.exposure_fraction()?;
        let artifact_mesh = Arc::new(mesh_artifact_in(&grid, &spec.geometry)?);
        let trigger_cells = spec
            .triggers
            .iter()
            .map(|t| {
                grid.params()
                    .cell_of_point(&t.position.into())
                    .expect("validated trigger lies in the grid")
            })
            .collect();
        let active_tool = spec.tools[0].name.clone();
        Ok(Session {
            spec_hash: spec.spec_hash(),
            spec,
            params,
            seed,
            grid,
            artifact_mesh,
            trigger_cells,
            state: SessionState {
                status: SessionStatus::Running,
                clock: 0.0,
                health: params.max_health,
                exposure,
                revealed_trigger_ids: Vec::new(),
                active_tool,
                stroke_count: 0,
                hits: 0,
                last_hit_time: None,
                last_decile: 0,
                event_log: Vec::new(),
            },
            inputs: Vec::new(),
        })
    }

    pub fn spec(&self) -> &Arc<ArtifactSpec> {
        &self.spec
    }

    pub fn spec_hash(&self) -> &str {
        &self.spec_hash
    }

    pub fn params(&self) -> &SessionParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn status(&self) -> SessionStatus {
        self.state.status
    }

    pub fn events(&self) -> &[Event] {
        &self.state.event_log
    }

    pub fn inputs(&self) -> &[InputRecord] {
        &self.inputs
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    /// Mutable grid access for meshers that need to drain the dirty set.
    pub fn grid_mut(&mut self) -> &mut VoxelGrid {
        &mut self.grid
    }

    pub fn artifact_mesh(&self) -> &Arc<Vec<MeshChunk>> {
        &self.artifact_mesh
    }

    pub fn time_remaining(&self) -> f64 {
        (self.params.time_limit_s - self.state.clock).max(0.0)
    }

    pub fn select_tool(&mut self, name: &str) -> Result<(), SessionError> {
        if self.state.status.is_terminal() {
            return Err(SessionError::NotRunning);
        }
        if self.spec.tool(name).is_none() {
            return Err(SessionError::UnknownTool(name.to_string()));
        }
        if self.state.active_tool != name {
            self.state.active_tool = name.to_string();
            self.inputs.push(InputRecord::SelectTool {
                t: self.state.clock,
                payload: ToolChoice {
                    tool: name.to_string(),
                },
            });
        }
        Ok(())
    }

    /// Advances the clock without carving.
    pub fn tick(&mut self, now: f64) -> Result<Vec<Event>, SessionError> {
        if self.state.status.is_terminal() {
            return Ok(Vec::new());
        }
        self.check_time(now)?;
        self.inputs.push(InputRecord::Tick { t: now });
        let mark = self.state.event_log.len();
        self.advance_clock(now);
        Ok(self.state.event_log[mark..].to_vec())
    }

    pub fn apply_stroke(&mut self, stroke: &Stroke) -> Result<Vec<Event>, SessionError> {
        if self.state.status.is_terminal() {
            return Err(SessionError::NotRunning);
        }
        self.check_time(stroke.t)?;
        let pose = &stroke.pose;
        if !pose.position.iter().chain(&pose.rotation).all(|c| c.is_finite()) {
            return Err(SessionError::BadPose);
        }
        self.inputs.push(InputRecord::Stroke {
            t: stroke.t,
            payload: stroke.pose,
        });
        let mark = self.state.event_log.len();
        if self.advance_clock(stroke.t) {
            return Ok(self.state.event_log[mark..].to_vec());
        }

        let t = stroke.t;
        let tool = self
            .spec
            .tool(&self.state.active_tool)
            .expect("active tool exists in spec");
        let brush = tool.brush();
        let carve = self.grid.carve(&brush, &stroke.pose);
        self.state.stroke_count += 1;
        self.push(
            t,
            EventKind::StrokeApplied {
                tool: tool.name.clone(),
                removed_volume: carve.removed_volume,
                cells_changed: carve.cells_changed,
                cells_emptied: carve.cells_emptied,
                artifact_contact: carve.artifact_contact,
            },
        );

        self.score_hit(t, &carve);
        self.reveal_triggers(t, &carve);
        self.update_exposure(t);
        Ok(self.state.event_log[mark..].to_vec())
    }

    pub fn final_report(&self) -> Result<SessionReport, SessionError> {
        if !self.state.status.is_terminal() {
            return Err(SessionError::StillRunning);
        }
        Ok(self.report())
    }

    /// Snapshot of the report fields for the current state.
    pub fn report(&self) -> SessionReport {
        SessionReport {
            status: self.state.status,
            duration: self.state.clock,
            hits_taken: self.state.hits,
            health_remaining: self.state.health,
            exposure: self.state.exposure,
            strokes: self.state.stroke_count,
            triggers_revealed: self.state.revealed_trigger_ids.len(),
            removed_volume: self.grid.removed_total(),
        }
    }

    /// The event log as JSON lines, one event per line.
    pub fn event_log_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.state.event_log {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    fn check_time(&self, t: f64) -> Result<(), SessionError> {
        if !(t >= self.state.clock && t.is_finite()) {
            return Err(SessionError::NonMonotoneTime {
                t,
                clock: self.state.clock,
            });
        }
        Ok(())
    }

    /// Moves the clock to `t`; returns true if the time limit was reached.
    fn advance_clock(&mut self, t: f64) -> bool {
        let limit = self.params.time_limit_s;
        if t >= limit {
            self.state.clock = limit;
            self.state.status = SessionStatus::TimeUp;
            let stats = self.report();
            self.push(limit, EventKind::TimeUp { stats });
            true
        } else {
            self.state.clock = t;
            false
        }
    }

    fn score_hit(&mut self, t: f64, carve: &CarveResult) {
        if !carve.artifact_contact {
            return;
        }
        let cooled = self
            .state
            .last_hit_time
            .is_none_or(|last| t - last >= self.params.hit_cooldown_s);
        if !cooled {
            return;
        }
        self.state.hits += 1;
        self.state.health = self.state.health.saturating_sub(self.params.hit_penalty);
        self.state.last_hit_time = Some(t);
        self.push(
            t,
            EventKind::Hit {
                contact_point: carve.contact_point.expect("contact has a point"),
                health_after: self.state.health,
            },
        );
    }

    fn reveal_triggers(&mut self, t: f64, carve: &CarveResult) {
        if carve.emptied_cells.is_empty() {
            return;
        }
        let emptied: HashSet<[usize; 3]> = carve.emptied_cells.iter().copied().collect();
        let spec = Arc::clone(&self.spec);
        for (i, trigger) in spec.triggers.iter().enumerate() {
            if self.state.revealed_trigger_ids.contains(&trigger.id) {
                continue;
            }
            if emptied.contains(&self.trigger_cells[i]) {
                self.state.revealed_trigger_ids.push(trigger.id.clone());
                let event = EventKind::TriggerRevealed {
                    trigger_id: trigger.id.clone(),
                    dialog: trigger.dialog.clone(),
                };
                self.push(t, event);
            }
        }
    }

    fn update_exposure(&mut self, t: f64) {
        let total = self.grid.surface_cells().len();
        let exposed = self.grid.exposed_surface_count();
        self.state.exposure = exposed as f64 / total as f64;
        let decile = ((exposed * 10) / total) as u8;
        while self.state.last_decile < decile {
            self.state.last_decile += 1;
            let d = self.state.last_decile;
            self.push(t, EventKind::ExposureMilestone { decile: d });
        }
        if self.state.exposure >= self.params.completion_exposure {
            self.state.status = SessionStatus::Completed;
            let stats = self.report();
            let dialog = self.spec.completion_dialog.clone();
            self.push(t, EventKind::Completed { dialog, stats });
        }
    }

    fn push(&mut self, timestamp: f64, event: EventKind) {
        self.state.event_log.push(Event { timestamp, event });
    }
}
