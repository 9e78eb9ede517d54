//! Voxel excavation engine.
//!
//! A relic is described by a signed distance field and buried in a cubic clod of
//! earth sampled on a regular grid. Tools carve density out of the grid, the
//! earth surface is re-extracted per chunk with marching cubes, and a
//! [`session::Session`] scores each stroke against the rules of a timed dig.

pub mod catalog;
pub mod mesher;
pub mod sdf;
pub mod session;
pub mod sim;
pub mod voxel;

pub use catalog::{builtin_relic, builtin_relics, load_spec, ArtifactSpec, SessionParams, ToolSpec};
pub use mesher::{mesh_all, mesh_artifact, EarthMesher, MeshChunk};
pub use sdf::SdfNode;
pub use session::{Event, EventKind, Session, SessionReport, SessionStatus, Stroke};
pub use voxel::{Brush, BrushShape, Falloff, Label, Pose, VoxelGrid};
