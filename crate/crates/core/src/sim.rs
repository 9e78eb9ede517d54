//! Scripted excavators.
//!
//! Bots pick stroke poses by casting random rays into the clod and striking the
//! first solid cell they meet, which is what a player sees on the earth mesh.
//! `RiskAverse` additionally consults the true artifact SDF, so it is an oracle
//! rather than a fair player.

use std::f64::consts::PI;
use std::io;
use std::sync::Arc;

use nalgebra::{Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::UnitSphere;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ArtifactSpec, SessionParams};
use crate::sdf::Vec3;
use crate::session::{EventKind, Session, SessionError, SessionReport, SessionStatus, Stroke};
use crate::voxel::{Label, Pose, VoxelGrid};

/// Stroke rate of the surface-aiming bots.
pub const FOLLOWER_RATE_HZ: f64 = 15.0;
/// Rays sampled per stroke by the surface-aiming bots.
pub const FOLLOWER_SAMPLES: usize = 8;
/// Consecutive strokes without progress after which a bot gives up.
pub const STALL_LIMIT: u32 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BotVariant {
    RandomCarver { strokes_per_s: f64 },
    SurfaceFollower { stand_off: f64 },
    RiskAverse { sdf_margin: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BotPolicy {
    pub variant: BotVariant,
    pub seed: u64,
}

impl BotPolicy {
    pub fn random_carver(strokes_per_s: f64, seed: u64) -> Self {
        BotPolicy {
            variant: BotVariant::RandomCarver { strokes_per_s },
            seed,
        }
    }

    pub fn surface_follower(stand_off: f64, seed: u64) -> Self {
        BotPolicy {
            variant: BotVariant::SurfaceFollower { stand_off },
            seed,
        }
    }

    pub fn risk_averse(sdf_margin: f64, seed: u64) -> Self {
        BotPolicy {
            variant: BotVariant::RiskAverse { sdf_margin },
            seed,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            BotVariant::RandomCarver { .. } => "random-carver",
            BotVariant::SurfaceFollower { .. } => "surface-follower",
            BotVariant::RiskAverse { .. } => "risk-averse",
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = match self.variant {
            BotVariant::RandomCarver { strokes_per_s } => {
                strokes_per_s > 0.0 && strokes_per_s.is_finite()
            }
            BotVariant::SurfaceFollower { stand_off } => stand_off >= 0.0 && stand_off.is_finite(),
            BotVariant::RiskAverse { sdf_margin } => sdf_margin >= 0.0 && sdf_margin.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Policy(*self))
        }
    }

    fn rate(&self) -> f64 {
        match self.variant {
            BotVariant::RandomCarver { strokes_per_s } => strokes_per_s,
            _ => FOLLOWER_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Replaces the spec's session rules.
    pub params: Option<SessionParams>,
    /// Tool to select before the first stroke.
    pub tool: Option<String>,
    /// Stop after this many strokes and let the clock run out.
    pub max_strokes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub completion: bool,
    pub duration: f64,
    pub hits: u32,
    pub strokes: u64,
    /// `(t, exposure)` recorded whenever exposure changes.
    pub exposure_curve: Vec<(f64, f64)>,
    pub removed_volume: f64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid bot policy {0:?}")]
    Policy(BotPolicy),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

pub struct BotRun {
    pub report: SessionReport,
    pub metrics: RunMetrics,
    pub session: Session,
}

enum Hit {
    Earth { point: Vec3, dir: Vec3 },
    Artifact { point: Vec3, dir: Vec3 },
}

/// Casts a ray through a uniform point of the clod along a uniform direction
/// and returns the first non-empty cell it enters.
fn cast(grid: &VoxelGrid, rng: &mut ChaCha8Rng) -> Option<Hit> {
    let p = grid.params();
    let half = grid.clod_edge() / 2.0;
    let target = Vec3::from_fn(|_, _| rng.random_range(-half..half));
    let dir = Vec3::from(rng.sample::<[f64; 3], _>(UnitSphere));
    let span = grid.clod_edge() * 3f64.sqrt();
    let start = target - dir * span;
    let step = p.cell_size / 2.0;
    let steps = (2.0 * span / step).ceil() as usize;
    for k in 0..=steps {
        let point = start + dir * (k as f64 * step);
        let Some(idx) = p.cell_of_point(&point) else {
            continue;
        };
        match grid.label(idx) {
            Label::Earth => return Some(Hit::Earth { point, dir }),
            Label::Artifact => return Some(Hit::Artifact { point, dir }),
            Label::Empty => {}
        }
    }
    None
}

/// Orientation taking the brush's local +z onto `dir`, twisted by `twist` about it.
fn facing(dir: &Vec3, twist: f64) -> [f64; 4] {
    let align = UnitQuaternion::rotation_between(&Vec3::z(), dir)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vec3::x_axis(), PI));
    let q = align * UnitQuaternion::from_axis_angle(&Unit::new_unchecked(Vec3::z()), twist);
    [q.w, q.i, q.j, q.k]
}

struct Chooser {
    policy: BotPolicy,
    rng: ChaCha8Rng,
}

impl Chooser {
    fn next_pose(&mut self, session: &Session) -> Option<Pose> {
        let grid = session.grid();
        match self.policy.variant {
            BotVariant::RandomCarver { .. } => {
                let (Hit::Earth { point, dir } | Hit::Artifact { point, dir }) =
                    cast(grid, &mut self.rng)?;
                let twist = self.rng.random_range(0.0..2.0 * PI);
                Some(Pose {
                    position: point.into(),
                    rotation: facing(&dir, twist),
                })
            }
            BotVariant::SurfaceFollower { stand_off } => {
                let (point, dir) = self.nearest_hits(grid).into_iter().next()?;
                Some(Pose {
                    position: (point - dir * stand_off).into(),
                    rotation: facing(&dir, 0.0),
                })
            }
            BotVariant::RiskAverse { sdf_margin } => {
                let tool = session
                    .spec()
                    .tool(&session.state().active_tool)
                    .expect("active tool exists");
                let brush = tool.brush();
                let step = grid.params().cell_size / 2.0;
                let backoffs = (brush.reach() / step).ceil() as usize;
                for (point, dir) in self.nearest_hits(grid) {
                    for k in 0..=backoffs {
                        let pose = Pose {
                            position: (point - dir * (k as f64 * step)).into(),
                            rotation: facing(&dir, 0.0),
                        };
                        match grid.min_support_sdf(&brush, &pose) {
                            // nothing solid left under the brush
                            None => break,
                            Some(s) if s > 0.0 && s >= sdf_margin => return Some(pose),
                            Some(_) => {}
                        }
                    }
                }
                None
            }
        }
    }

    /// Earth hits from a batch of rays, nearest to the clod center first.
    fn nearest_hits(&mut self, grid: &VoxelGrid) -> Vec<(Vec3, Vec3)> {
        let mut hits: Vec<(Vec3, Vec3)> = (0..FOLLOWER_SAMPLES)
            .filter_map(|_| match cast(grid, &mut self.rng)? {
                Hit::Earth { point, dir } => Some((point, dir)),
                Hit::Artifact { .. } => None,
            })
            .collect();
        hits.sort_by(|a, b| a.0.norm().total_cmp(&b.0.norm()));
        hits
    }
}

/// Plays one session to a terminal status.
pub fn run_bot(
    spec: impl Into<Arc<ArtifactSpec>>,
    policy: &BotPolicy,
    opts: &RunOptions,
) -> Result<BotRun, SimError> {
    policy.validate()?;
    let spec = spec.into();
    let params = opts.params.unwrap_or(spec.session);
    let mut session = Session::start_with_params(spec, params, policy.seed)?;
    if let Some(tool) = &opts.tool {
        session.select_tool(tool).map_err(|e| match e {
            SessionError::UnknownTool(t) => SimError::UnknownTool(t),
            other => other.into(),
        })?;
    }

    let mut chooser = Chooser {
        policy: *policy,
        rng: ChaCha8Rng::seed_from_u64(policy.seed),
    };
    let dt = 1.0 / policy.rate();
    let limit = params.time_limit_s;
    let mut curve = vec![(0.0, session.state().exposure)];
    let mut stalled = 0u32;
    let mut step = 0u64;

    while session.status() == SessionStatus::Running {
        if opts
            .max_strokes
            .is_some_and(|m| session.state().stroke_count >= m)
            || stalled >= STALL_LIMIT
        {
            break;
        }
        step += 1;
        let t = step as f64 * dt;
        if t >= limit {
            session.tick(t)?;
            break;
        }
        let Some(pose) = chooser.next_pose(&session) else {
            stalled += 1;
            continue;
        };
        let before = session.state().exposure;
        let events = session.apply_stroke(&Stroke::new(t, pose))?;
        let removed = events.iter().any(|e| {
            matches!(e.event, EventKind::StrokeApplied { cells_changed, .. } if cells_changed > 0)
        });
        let exposure = session.state().exposure;
        if exposure != before {
            curve.push((t, exposure));
        }
        if removed || exposure != before {
            stalled = 0;
        } else {
            stalled += 1;
        }
    }
    if session.status() == SessionStatus::Running {
        let t = limit.max(session.state().clock);
        session.tick(t)?;
    }

    let report = session.final_report()?;
    let metrics = RunMetrics {
        completion: report.status == SessionStatus::Completed,
        duration: report.duration,
        hits: report.hits_taken,
        strokes: report.strokes,
        exposure_curve: curve,
        removed_volume: report.removed_volume,
    };
    Ok(BotRun {
        report,
        metrics,
        session,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRow {
    pub tool: String,
    pub metrics: RunMetrics,
}

/// One run per tool with the same policy and seed.
pub fn compare_tools(
    spec: impl Into<Arc<ArtifactSpec>>,
    policy: &BotPolicy,
    tools: &[&str],
    opts: &RunOptions,
) -> Result<Vec<ToolRow>, SimError> {
    let spec = spec.into();
    if let Some(missing) = tools.iter().find(|t| spec.tool(t).is_none()) {
        return Err(SimError::UnknownTool(missing.to_string()));
    }
    tools
        .par_iter()
        .map(|tool| {
            let opts = RunOptions {
                tool: Some(tool.to_string()),
                ..opts.clone()
            };
            let run = run_bot(Arc::clone(&spec), policy, &opts)?;
            Ok(ToolRow {
                tool: tool.to_string(),
                metrics: run.metrics,
            })
        })
        .collect()
}

/// One CSV row per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub relic: String,
    pub policy: String,
    pub seed: u64,
    pub tool: String,
    pub status: SessionStatus,
    pub completion: bool,
    pub duration: f64,
    pub hits: u32,
    pub health_remaining: u32,
    pub strokes: u64,
    pub triggers_revealed: usize,
    pub exposure: f64,
    pub removed_volume: f64,
}

impl MetricsRow {
    pub fn new(relic: &str, policy: &BotPolicy, tool: &str, report: &SessionReport) -> Self {
        MetricsRow {
            relic: relic.to_string(),
            policy: policy.name().to_string(),
            seed: policy.seed,
            tool: tool.to_string(),
            status: report.status,
            completion: report.status == SessionStatus::Completed,
            duration: report.duration,
            hits: report.hits_taken,
            health_remaining: report.health_remaining,
            strokes: report.strokes,
            triggers_revealed: report.triggers_revealed,
            exposure: report.exposure,
            removed_volume: report.removed_volume,
        }
    }

    pub fn from_run(relic: &str, policy: &BotPolicy, run: &BotRun) -> Self {
        Self::new(relic, policy, &run.session.state().active_tool, &run.report)
    }
}

pub fn write_metrics_csv<W: io::Write>(out: W, rows: &[MetricsRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub completed: usize,
    pub mean_duration: f64,
    pub mean_hits: f64,
    pub mean_strokes: f64,
    pub mean_removed_volume: f64,
    pub total_hits: u64,
}

impl Summary {
    pub fn of(rows: &[MetricsRow]) -> Self {
        let n = rows.len();
        let mean = |f: &dyn Fn(&MetricsRow) -> f64| {
            if n == 0 {
                0.0
            } else {
                rows.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Summary {
            runs: n,
            completed: rows.iter().filter(|r| r.completion).count(),
            mean_duration: mean(&|r| r.duration),
            mean_hits: mean(&|r| r.hits as f64),
            mean_strokes: mean(&|r| r.strokes as f64),
            mean_removed_volume: mean(&|r| r.removed_volume),
            total_hits: rows.iter().map(|r| r.hits as u64).sum(),
        }
    }
}

/// Runs the same policy for each seed in parallel.
pub fn run_batch(
    spec: impl Into<Arc<ArtifactSpec>>,
    policy: &BotPolicy,
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<Vec<MetricsRow>, SimError> {
    let spec = spec.into();
    seeds
        .par_iter()
        .map(|&seed| {
            let policy = BotPolicy { seed, ..*policy };
            let run = run_bot(Arc::clone(&spec), &policy, opts)?;
            Ok(MetricsRow::from_run(&spec.name, &policy, &run))
        })
        .collect()
}
