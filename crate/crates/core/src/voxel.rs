//! The clod: a uniform density grid with per-cell material labels.
//!
//! Density is earth occupancy in `[0, 1]`. A cell is `Empty` once its density
//! drops below [`EMPTY_THRESHOLD`], which is also the isovalue the earth mesh
//! is extracted at. Artifact cells are fixed at initialization and never touched
//! by carving.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{Quaternion, UnitQuaternion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdf::{SdfNode, Vec3};

pub const EMPTY_THRESHOLD: f32 = 0.5;
pub const MAX_CELLS_PER_AXIS: usize = 512;
pub const DEFAULT_CHUNK_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Earth,
    Artifact,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("clod edge and cell size must be positive and finite")]
    BadSize,
    #[error("grid of {0} cells per axis exceeds the {MAX_CELLS_PER_AXIS} limit")]
    DimensionOverflow(usize),
    #[error("artifact touches the clod boundary at cell {0:?}")]
    ArtifactTouchesBoundary([usize; 3]),
    #[error("degenerate artifact: no artifact surface cells")]
    DegenerateArtifact,
}

/// Geometry of the lattice shared by the earth grid and the artifact mesher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub dims: [usize; 3],
    pub cell_size: f64,
    /// World position of the min corner of cell (0, 0, 0).
    pub origin: Vec3,
    pub chunk_size: usize,
}

impl GridParams {
    /// Cubic clod of edge `clod_edge` centered on the world origin.
    pub fn for_clod(clod_edge: f64, cell_size: f64) -> Result<Self, GridError> {
        if !(clod_edge > 0.0 && cell_size > 0.0 && clod_edge.is_finite() && cell_size.is_finite()) {
            return Err(GridError::BadSize);
        }
        let raw = clod_edge / cell_size;
        let n = if (raw - raw.round()).abs() < 1e-9 {
            raw.round()
        } else {
            raw.ceil()
        };
        if n > MAX_CELLS_PER_AXIS as f64 {
            return Err(GridError::DimensionOverflow(n as usize));
        }
        let n = (n as usize).max(1);
        Ok(GridParams {
            dims: [n; 3],
            cell_size,
            origin: Vec3::repeat(-clod_edge / 2.0),
            chunk_size: DEFAULT_CHUNK_SIZE,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Center of lattice point `idx`; indices outside the grid are allowed.
    pub fn cell_center(&self, idx: [i64; 3]) -> Vec3 {
        Vec3::new(
            self.origin.x + (idx[0] as f64 + 0.5) * self.cell_size,
            self.origin.y + (idx[1] as f64 + 0.5) * self.cell_size,
            self.origin.z + (idx[2] as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn linear(&self, idx: [usize; 3]) -> usize {
        (idx[2] * self.dims[1] + idx[1]) * self.dims[0] + idx[0]
    }

    pub fn unlinear(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    pub fn in_grid(&self, idx: [i64; 3]) -> bool {
        (0..3).all(|a| idx[a] >= 0 && (idx[a] as usize) < self.dims[a])
    }

    /// Cell whose cube contains `p`, if any.
    pub fn cell_of_point(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.cell_size).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }

    pub fn chunk_dims(&self) -> [usize; 3] {
        let cs = self.chunk_size;
        [
            self.dims[0].div_ceil(cs),
            self.dims[1].div_ceil(cs),
            self.dims[2].div_ceil(cs),
        ]
    }

    /// Range of cube min-corner indices owned by chunk `c` along `axis`.
    ///
    /// Cubes span lattice points `q..=q+1` for `q` in `-1..n`, so the first
    /// chunk also owns the `-1` apron layer and the last chunk runs to `n - 1`.
    pub fn chunk_cube_range(&self, axis: usize, c: usize) -> (i64, i64) {
        let cs = self.chunk_size as i64;
        let n = self.dims[axis] as i64;
        let last = self.chunk_dims()[axis] as i64 - 1;
        let c = c as i64;
        let lo = if c == 0 { -1 } else { c * cs };
        let hi = if c == last { n - 1 } else { (c + 1) * cs - 1 };
        (lo, hi)
    }

    /// Chunk that owns cube `q` along `axis`.
    pub fn chunk_of_cube(&self, axis: usize, q: i64) -> usize {
        let last = self.chunk_dims()[axis] - 1;
        ((q.max(0) as usize) / self.chunk_size).min(last)
    }

    pub fn all_chunks(&self) -> Vec<[usize; 3]> {
        let cd = self.chunk_dims();
        let mut out = Vec::with_capacity(cd.iter().product());
        for z in 0..cd[2] {
            for y in 0..cd[1] {
                for x in 0..cd[0] {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BrushShape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Falloff {
    Hard,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Brush {
    pub shape: BrushShape,
    pub strength: f64,
    pub falloff: Falloff,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BrushError {
    #[error("brush radius must be positive, got {0}")]
    Radius(f64),
    #[error("brush half extents must be positive, got {0:?}")]
    HalfExtents([f64; 3]),
    #[error("brush strength must be in (0, 1], got {0}")]
    Strength(f64),
}

impl Brush {
    pub fn validate(&self) -> Result<(), BrushError> {
        match self.shape {
            BrushShape::Sphere { radius } if !(radius > 0.0 && radius.is_finite()) => {
                return Err(BrushError::Radius(radius))
            }
            BrushShape::Box { half_extents }
                if !half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) =>
            {
                return Err(BrushError::HalfExtents(half_extents))
            }
            _ => {}
        }
        if !(self.strength > 0.0 && self.strength <= 1.0) {
            return Err(BrushError::Strength(self.strength));
        }
        Ok(())
    }

    /// Radius of the smallest ball around the pose origin containing the support.
    pub fn reach(&self) -> f64 {
        match self.shape {
            BrushShape::Sphere { radius } => radius,
            BrushShape::Box { half_extents } => Vec3::from(half_extents).norm(),
        }
    }

    /// Kernel weight of a point given in the brush's local frame, `None` outside.
    pub fn kernel(&self, local: &Vec3) -> Option<f64> {
        let normalized = match self.shape {
            BrushShape::Sphere { radius } => {
                let d = local.norm();
                if d > radius {
                    return None;
                }
                d / radius
            }
            BrushShape::Box { half_extents } => {
                let mut m = 0.0f64;
                for a in 0..3 {
                    let r = local[a].abs() / half_extents[a];
                    if r > 1.0 {
                        return None;
                    }
                    m = m.max(r);
                }
                m
            }
        };
        Some(match self.falloff {
            Falloff::Hard => 1.0,
            Falloff::Linear => 1.0 - normalized,
        })
    }
}

/// Rigid placement of a brush: translation plus rotation quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
}

fn identity_rotation() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl Pose {
    pub fn at(position: [f64; 3]) -> Self {
        Pose {
            position,
            rotation: identity_rotation(),
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        let q = Quaternion::new(w, x, y, z);
        if q.norm() > 0.0 && q.norm().is_finite() {
            UnitQuaternion::from_quaternion(q)
        } else {
            UnitQuaternion::identity()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CarveResult {
    pub removed_volume: f64,
    pub cells_changed: usize,
    pub cells_emptied: usize,
    pub artifact_contact: bool,
    pub contact_point: Option<[f64; 3]>,
    pub emptied_cells: Vec<[usize; 3]>,
}

#[derive(Debug, Clone)]
pub struct VoxelGrid {
    params: GridParams,
    clod_edge: f64,
    density: Vec<f32>,
    label: Vec<Label>,
    /// Artifact SDF sampled at each cell center.
    sdf: Vec<f64>,
    initial_earth: f64,
    removed: f64,
    surface: Vec<usize>,
    surface_slot: HashMap<usize, usize>,
    exposed: Vec<bool>,
    exposed_count: usize,
    dirty: BTreeSet<[usize; 3]>,
}

impl VoxelGrid {
    /// Voxelizes a cubic clod of edge `clod_edge` around the artifact.
    pub fn new(clod_edge: f64, cell_size: f64, artifact: &SdfNode) -> Result<Self, GridError> {
        let params = GridParams::for_clod(clod_edge, cell_size)?;
        Self::with_params(params, clod_edge, artifact)
    }

    pub fn with_params(
        params: GridParams,
        clod_edge: f64,
        artifact: &SdfNode,
    ) -> Result<Self, GridError> {
        let n = params.cell_count();
        let half = clod_edge / 2.0;
        let plane = params.dims[0] * params.dims[1];
        let mut sdf = vec![0f64; n];
        let mut label = vec![Label::Earth; n];
        let mut density = vec![1f32; n];
        sdf.par_chunks_mut(plane)
            .zip(label.par_chunks_mut(plane))
            .zip(density.par_chunks_mut(plane))
            .enumerate()
            .for_each(|(z, ((sdf, label), density))| {
                for y in 0..params.dims[1] {
                    for x in 0..params.dims[0] {
                        let i = y * params.dims[0] + x;
                        let c = params.cell_center([x as i64, y as i64, z as i64]);
                        let d = artifact.eval(&c);
                        sdf[i] = d;
                        if d <= 0.0 {
                            label[i] = Label::Artifact;
                            density[i] = 0.0;
                        } else if c.iter().any(|v| v.abs() > half) {
                            label[i] = Label::Empty;
                            density[i] = 0.0;
                        }
                    }
                }
            });

        let mut grid = VoxelGrid {
            params,
            clod_edge,
            density,
            label,
            sdf,
            initial_earth: 0.0,
            removed: 0.0,
            surface: Vec::new(),
            surface_slot: HashMap::new(),
            exposed: Vec::new(),
            exposed_count: 0,
            dirty: BTreeSet::new(),
        };

        let dims = params.dims;
        for i in 0..n {
            if grid.label[i] != Label::Artifact {
                continue;
            }
            let idx = params.unlinear(i);
            if (0..3).any(|a| idx[a] == 0 || idx[a] + 1 == dims[a]) {
                return Err(GridError::ArtifactTouchesBoundary(idx));
            }
            let on_surface = grid
                .face_neighbors(idx)
                .any(|nb| nb.is_none_or(|j| grid.label[j] != Label::Artifact));
            if on_surface {
                grid.surface_slot.insert(i, grid.surface.len());
                grid.surface.push(i);
            }
        }
        grid.exposed = vec![false; grid.surface.len()];
        for slot in 0..grid.surface.len() {
            let idx = params.unlinear(grid.surface[slot]);
            if grid
                .face_neighbors(idx)
                .any(|nb| nb.is_none_or(|j| grid.label[j] == Label::Empty))
            {
                grid.exposed[slot] = true;
                grid.exposed_count += 1;
            }
        }
        grid.initial_earth = grid.density.iter().map(|d| *d as f64).sum::<f64>() * grid.cell_volume();
        grid.mark_all_dirty();
        Ok(grid)
    }

    /// Linear indices of the six face neighbors; `None` for neighbors outside the grid.
    fn face_neighbors(&self, idx: [usize; 3]) -> impl Iterator<Item = Option<usize>> + '_ {
        const OFFSETS: [[i64; 3]; 6] = [
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        OFFSETS.iter().map(move |o| {
            let nb = [
                idx[0] as i64 + o[0],
                idx[1] as i64 + o[1],
                idx[2] as i64 + o[2],
            ];
            self.params
                .in_grid(nb)
                .then(|| self.params.linear([nb[0] as usize, nb[1] as usize, nb[2] as usize]))
        })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn dims(&self) -> [usize; 3] {
        self.params.dims
    }

    pub fn clod_edge(&self) -> f64 {
        self.clod_edge
    }

    pub fn cell_volume(&self) -> f64 {
        self.params.cell_size.powi(3)
    }

    pub fn density(&self, idx: [usize; 3]) -> f32 {
        self.density[self.params.linear(idx)]
    }

    pub fn densities(&self) -> &[f32] {
        &self.density
    }

    pub fn label(&self, idx: [usize; 3]) -> Label {
        self.label[self.params.linear(idx)]
    }

    pub fn labels(&self) -> &[Label] {
        &self.label
    }

    /// Artifact SDF sampled at the center of `idx` at initialization.
    pub fn artifact_sdf(&self, idx: [usize; 3]) -> f64 {
        self.sdf[self.params.linear(idx)]
    }

    /// Density at a lattice index, treating everything outside the grid as empty.
    pub fn sample(&self, idx: [i64; 3]) -> f32 {
        if self.params.in_grid(idx) {
            self.density[self
                .params
                .linear([idx[0] as usize, idx[1] as usize, idx[2] as usize])]
        } else {
            0.0
        }
    }

    pub fn artifact_cells(&self) -> Vec<usize> {
        (0..self.label.len())
            .filter(|&i| self.label[i] == Label::Artifact)
            .collect()
    }

    /// Artifact cells with at least one non-artifact face neighbor.
    pub fn surface_cells(&self) -> &[usize] {
        &self.surface
    }

    pub fn exposed_surface_count(&self) -> usize {
        self.exposed_count
    }

    /// Share of artifact surface cells with an empty (or out-of-grid) face neighbor.
    pub fn exposure_fraction(&self) -> Result<f64, GridError> {
        if self.surface.is_empty() {
            return Err(GridError::DegenerateArtifact);
        }
        Ok(self.exposed_count as f64 / self.surface.len() as f64)
    }

    /// Earth volume removed since initialization, in cubic meters.
    pub fn removed_total(&self) -> f64 {
        self.removed
    }

    pub fn initial_earth_volume(&self) -> f64 {
        self.initial_earth
    }

    pub fn dirty_chunks(&self) -> &BTreeSet<[usize; 3]> {
        &self.dirty
    }

    pub fn take_dirty(&mut self) -> BTreeSet<[usize; 3]> {
        std::mem::take(&mut self.dirty)
    }

    pub fn mark_all_dirty(&mut self) {
        self.dirty.extend(self.params.all_chunks());
    }

    /// Index box of cells whose centers may lie in the brush support.
    fn support_range(&self, brush: &Brush, pose: &Pose) -> Option<[(usize, usize); 3]> {
        let p = &self.params;
        let pos = pose.position();
        let half = match brush.shape {
            BrushShape::Sphere { radius } => Vec3::repeat(radius),
            BrushShape::Box { half_extents } => {
                pose.rotation().to_rotation_matrix().matrix().abs() * Vec3::from(half_extents)
            }
        };
        let mut range = [(0usize, 0usize); 3];
        for a in 0..3 {
            let lo = ((pos[a] - half[a] - p.origin[a]) / p.cell_size - 0.5).floor() as i64;
            let hi = ((pos[a] + half[a] - p.origin[a]) / p.cell_size - 0.5).ceil() as i64;
            let lo = lo.max(0);
            let hi = hi.min(p.dims[a] as i64 - 1);
            if lo > hi {
                return None;
            }
            range[a] = (lo as usize, hi as usize);
        }
        Some(range)
    }

    /// Smallest stored artifact SDF over non-empty cells inside the brush
    /// support, or `None` if the support holds no such cell.
    pub fn min_support_sdf(&self, brush: &Brush, pose: &Pose) -> Option<f64> {
        let p = &self.params;
        let range = self.support_range(brush, pose)?;
        let pos = pose.position();
        let inv = pose.rotation().inverse();
        let mut best: Option<f64> = None;
        for z in range[2].0..=range[2].1 {
            for y in range[1].0..=range[1].1 {
                for x in range[0].0..=range[0].1 {
                    let i = p.linear([x, y, z]);
                    if self.label[i] == Label::Empty {
                        continue;
                    }
                    let c = p.cell_center([x as i64, y as i64, z as i64]);
                    if brush.kernel(&(inv * (c - pos))).is_some() {
                        let s = self.sdf[i];
                        best = Some(best.map_or(s, |b| b.min(s)));
                    }
                }
            }
        }
        best
    }

    /// Applies one brush stroke. Brushes placed outside the grid are no-ops.
    pub fn carve(&mut self, brush: &Brush, pose: &Pose) -> CarveResult {
        let p = self.params;
        let pos = pose.position();
        let inv = pose.rotation().inverse();
        let Some(range) = self.support_range(brush, pose) else {
            return CarveResult::default();
        };

        let strength = brush.strength;
        let mut result = CarveResult::default();
        let mut removed = 0.0f64;
        let mut contact: Option<(f64, [usize; 3])> = None;
        let mut changed_lo = [usize::MAX; 3];
        let mut changed_hi = [0usize; 3];

        for z in range[2].0..=range[2].1 {
            for y in range[1].0..=range[1].1 {
                for x in range[0].0..=range[0].1 {
                    let idx = [x, y, z];
                    let i = p.linear(idx);
                    let label = self.label[i];
                    if label == Label::Empty {
                        continue;
                    }
                    let c = p.cell_center([x as i64, y as i64, z as i64]);
                    let local = inv * (c - pos);
                    let Some(k) = brush.kernel(&local) else {
                        continue;
                    };
                    if label == Label::Artifact {
                        let s = self.sdf[i];
                        if contact.is_none_or(|(best, at)| s < best || (s == best && idx < at)) {
                            contact = Some((s, idx));
                        }
                        continue;
                    }
                    let old = self.density[i];
                    let new = (old - (strength * k) as f32).max(0.0);
                    if new == old {
                        continue;
                    }
                    self.density[i] = new;
                    removed += (old - new) as f64;
                    result.cells_changed += 1;
                    for a in 0..3 {
                        changed_lo[a] = changed_lo[a].min(idx[a]);
                        changed_hi[a] = changed_hi[a].max(idx[a]);
                    }
                    if new < EMPTY_THRESHOLD {
                        self.label[i] = Label::Empty;
                        result.emptied_cells.push(idx);
                        self.update_exposure_around(idx);
                    }
                }
            }
        }

        result.cells_emptied = result.emptied_cells.len();
        result.removed_volume = removed * self.cell_volume();
        self.removed += result.removed_volume;
        if let Some((_, idx)) = contact {
            result.artifact_contact = true;
            let c = p.cell_center([idx[0] as i64, idx[1] as i64, idx[2] as i64]);
            result.contact_point = Some([c.x, c.y, c.z]);
        }
        if result.cells_changed > 0 {
            self.mark_dirty_region(changed_lo, changed_hi);
        }
        result
    }

    fn update_exposure_around(&mut self, idx: [usize; 3]) {
        let nbs: Vec<usize> = self.face_neighbors(idx).flatten().collect();
        for j in nbs {
            if let Some(&slot) = self.surface_slot.get(&j) {
                if !self.exposed[slot] {
                    self.exposed[slot] = true;
                    self.exposed_count += 1;
                }
            }
        }
    }

    /// Marks every chunk whose meshed output depends on cells in `[lo, hi]`.
    ///
    /// A cube with min corner `q` reads lattice values `q - 1 ..= q + 2` (the
    /// extra layer feeds the central-difference normals), so a change at `i`
    /// affects cubes `i - 2 ..= i + 1`.
    fn mark_dirty_region(&mut self, lo: [usize; 3], hi: [usize; 3]) {
        let mut crange = [(0usize, 0usize); 3];
        for a in 0..3 {
            let n = self.params.dims[a] as i64;
            let qlo = (lo[a] as i64 - 2).max(-1);
            let qhi = (hi[a] as i64 + 1).min(n - 1);
            crange[a] = (
                self.params.chunk_of_cube(a, qlo),
                self.params.chunk_of_cube(a, qhi),
            );
        }
        for z in crange[2].0..=crange[2].1 {
            for y in crange[1].0..=crange[1].1 {
                for x in crange[0].0..=crange[0].1 {
                    self.dirty.insert([x, y, z]);
                }
            }
        }
    }
}
