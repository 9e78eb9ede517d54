//! Marching-cubes surface extraction over the clod lattice.
//!
//! Lattice points are cell centers. Each chunk owns a block of cubes and reads
//! one layer of apron samples on each side, so adjacent chunks compute
//! bit-identical vertices along their shared faces.

pub mod obj;
pub mod tables;
pub mod topology;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdf::{SdfNode, Vec3};
use crate::voxel::{GridParams, VoxelGrid, EMPTY_THRESHOLD};
use tables::{CORNERS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE};

pub const EARTH_ISOVALUE: f64 = EMPTY_THRESHOLD as f64;

/// Samples lying exactly on the isovalue would put the vertices of several
/// edges on the same lattice point and pinch the welded surface, so vertices
/// are kept this fraction of an edge away from either end.
const EDGE_T_MIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("chunk {0:?} is outside the grid")]
    ChunkOutOfRange([usize; 3]),
    #[error("degenerate artifact: the sdf never crosses zero on the grid")]
    DegenerateArtifact,
}

/// Triangle mesh for one chunk. Triangles wind counter-clockwise seen from
/// the side the normals point to (out of the solid).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeshChunk {
    pub chunk_coord: [usize; 3],
    pub version: u64,
    pub vertices: Vec<[f32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub indices: Vec<u32>,
}

impl MeshChunk {
    pub fn triangle_count(&self) -> usize {
        self.indices.len() / 3
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn triangles(&self) -> impl Iterator<Item = [[f32; 3]; 3]> + '_ {
        self.indices.chunks_exact(3).map(|t| {
            [
                self.vertices[t[0] as usize],
                self.vertices[t[1] as usize],
                self.vertices[t[2] as usize],
            ]
        })
    }
}

/// A scalar field sampled on lattice points. The solid side is `value >= iso`.
pub trait LatticeField: Sync {
    fn value(&self, idx: [i64; 3]) -> f64;
}

impl LatticeField for VoxelGrid {
    fn value(&self, idx: [i64; 3]) -> f64 {
        self.sample(idx) as f64
    }
}

/// Negated artifact SDF, so that the relic interior is the solid side of iso 0.
pub struct ArtifactField<'a> {
    pub sdf: &'a SdfNode,
    pub params: GridParams,
}

impl LatticeField for ArtifactField<'_> {
    fn value(&self, idx: [i64; 3]) -> f64 {
        -self.sdf.eval(&self.params.cell_center(idx))
    }
}

impl LatticeField for Block {
    fn value(&self, idx: [i64; 3]) -> f64 {
        self.get(idx)
    }
}

struct GridArtifactField<'a> {
    grid: &'a VoxelGrid,
    sdf: &'a SdfNode,
}

impl LatticeField for GridArtifactField<'_> {
    fn value(&self, idx: [i64; 3]) -> f64 {
        let p = self.grid.params();
        if p.in_grid(idx) {
            -self.grid.artifact_sdf(idx.map(|i| i as usize))
        } else {
            -self.sdf.eval(&p.cell_center(idx))
        }
    }
}

struct Block {
    lo: [i64; 3],
    size: [usize; 3],
    values: Vec<f64>,
}

impl Block {
    fn sample<F: LatticeField + ?Sized>(field: &F, lo: [i64; 3], hi: [i64; 3]) -> Self {
        let size = [
            (hi[0] - lo[0] + 1) as usize,
            (hi[1] - lo[1] + 1) as usize,
            (hi[2] - lo[2] + 1) as usize,
        ];
        let mut values = Vec::with_capacity(size.iter().product());
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    values.push(field.value([x, y, z]));
                }
            }
        }
        Block { lo, size, values }
    }

    /// Same as [`Block::sample`], one z-slab per task.
    fn sample_par<F: LatticeField + ?Sized>(field: &F, lo: [i64; 3], hi: [i64; 3]) -> Self {
        let values = (lo[2]..=hi[2])
            .into_par_iter()
            .flat_map_iter(|z| Block::sample(field, [lo[0], lo[1], z], [hi[0], hi[1], z]).values)
            .collect();
        let size = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
        Block { lo, size, values }
    }

    fn get(&self, p: [i64; 3]) -> f64 {
        let x = (p[0] - self.lo[0]) as usize;
        let y = (p[1] - self.lo[1]) as usize;
        let z = (p[2] - self.lo[2]) as usize;
        self.values[(z * self.size[1] + y) * self.size[0] + x]
    }

    fn gradient(&self, p: [i64; 3]) -> Vec3 {
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut hi = p;
            let mut lo = p;
            hi[a] += 1;
            lo[a] -= 1;
            g[a] = 0.5 * (self.get(hi) - self.get(lo));
        }
        g
    }
}

fn check_chunk(params: &GridParams, coord: [usize; 3]) -> Result<(), MeshError> {
    let cd = params.chunk_dims();
    if (0..3).any(|a| coord[a] >= cd[a]) {
        return Err(MeshError::ChunkOutOfRange(coord));
    }
    Ok(())
}

/// Runs marching cubes over the cubes owned by `coord`.
pub fn extract_field<F: LatticeField + ?Sized>(
    field: &F,
    params: &GridParams,
    coord: [usize; 3],
    iso: f64,
) -> Result<MeshChunk, MeshError> {
    check_chunk(params, coord)?;
    let mut qlo = [0i64; 3];
    let mut qhi = [0i64; 3];
    for a in 0..3 {
        let (lo, hi) = params.chunk_cube_range(a, coord[a]);
        qlo[a] = lo;
        qhi[a] = hi;
    }
    // cube q reads lattice q..=q+1, gradients reach one further on each side
    let block = Block::sample(
        field,
        [qlo[0] - 1, qlo[1] - 1, qlo[2] - 1],
        [qhi[0] + 2, qhi[1] + 2, qhi[2] + 2],
    );

    let mut mesh = MeshChunk {
        chunk_coord: coord,
        ..Default::default()
    };
    // no sign change anywhere in the block means every cube is case 0 or 255
    let below = block.values.iter().filter(|v| **v < iso).count();
    if below == 0 || below == block.values.len() {
        return Ok(mesh);
    }
    let mut edge_ids: HashMap<([i64; 3], usize), u32> = HashMap::new();

    for z in qlo[2]..=qhi[2] {
        for y in qlo[1]..=qhi[1] {
            for x in qlo[0]..=qhi[0] {
                let base = [x, y, z];
                let mut case = 0usize;
                for (k, c) in CORNERS.iter().enumerate() {
                    if block.get([base[0] + c[0], base[1] + c[1], base[2] + c[2]]) < iso {
                        case |= 1 << k;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                for tri in TRI_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    for &e in tri {
                        let id = edge_vertex(
                            &block,
                            params,
                            &mut mesh,
                            &mut edge_ids,
                            base,
                            e as usize,
                            iso,
                        );
                        mesh.indices.push(id);
                    }
                }
            }
        }
    }
    Ok(mesh)
}

fn edge_vertex(
    block: &Block,
    params: &GridParams,
    mesh: &mut MeshChunk,
    edge_ids: &mut HashMap<([i64; 3], usize), u32>,
    base: [i64; 3],
    edge: usize,
    iso: f64,
) -> u32 {
    let [ca, cb] = EDGE_CORNERS[edge];
    let pa = add(base, CORNERS[ca]);
    let pb = add(base, CORNERS[cb]);
    // canonical orientation: from the lower lattice point along the edge axis
    let (lo, hi) = if pa <= pb { (pa, pb) } else { (pb, pa) };
    let axis = (0..3).find(|&a| lo[a] != hi[a]).unwrap_or(0);
    if let Some(&id) = edge_ids.get(&(lo, axis)) {
        return id;
    }

    let vlo = block.get(lo);
    let vhi = block.get(hi);
    let t = if vhi == vlo {
        0.5
    } else {
        ((iso - vlo) / (vhi - vlo)).clamp(EDGE_T_MIN, 1.0 - EDGE_T_MIN)
    };
    let mut pos = params.cell_center(lo);
    pos[axis] += t * params.cell_size;

    let g = block.gradient(lo) * (1.0 - t) + block.gradient(hi) * t;
    let mut n = -g;
    let len = n.norm();
    if len > 1e-12 && len.is_finite() {
        n /= len;
    } else {
        n = Vec3::zeros();
        n[axis] = if vlo >= iso { 1.0 } else { -1.0 };
    }
    let n32 = normalize32([n.x as f32, n.y as f32, n.z as f32]);

    let id = mesh.vertices.len() as u32;
    mesh.vertices.push([pos.x as f32, pos.y as f32, pos.z as f32]);
    mesh.normals.push(n32);
    edge_ids.insert((lo, axis), id);
    id
}

fn add(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn normalize32(v: [f32; 3]) -> [f32; 3] {
    let len = (v[0] as f64).hypot(v[1] as f64).hypot(v[2] as f64);
    [
        (v[0] as f64 / len) as f32,
        (v[1] as f64 / len) as f32,
        (v[2] as f64 / len) as f32,
    ]
}

/// Extracts the earth surface of one chunk.
pub fn extract_chunk(
    grid: &VoxelGrid,
    coord: [usize; 3],
    iso: f64,
) -> Result<MeshChunk, MeshError> {
    extract_field(grid, grid.params(), coord, iso)
}

/// Extracts every chunk of the earth surface from scratch, in chunk order.
pub fn mesh_all(grid: &VoxelGrid, iso: f64) -> Vec<MeshChunk> {
    grid.params()
        .all_chunks()
        .into_par_iter()
        .map(|c| extract_chunk(grid, c, iso).expect("chunk in range"))
        .collect()
}

/// One-time extraction of the relic surface at iso 0 over the clod lattice.
/// Only non-empty chunks are returned.
pub fn mesh_artifact(sdf: &SdfNode, params: &GridParams) -> Result<Vec<MeshChunk>, MeshError> {
    let field = ArtifactField {
        sdf,
        params: *params,
    };
    // chunk blocks overlap, so evaluate the sdf once per lattice point up front;
    // the range covers every cube plus the gradient apron
    let d = params.dims.map(|n| n as i64);
    let field = Block::sample_par(&field, [-2; 3], [d[0] + 1, d[1] + 1, d[2] + 1]);
    extract_artifact(&field, params)
}

/// [`mesh_artifact`] reusing the SDF samples `grid` took at initialization.
/// Produces the identical mesh when `sdf` is the grid's artifact.
pub fn mesh_artifact_in(grid: &VoxelGrid, sdf: &SdfNode) -> Result<Vec<MeshChunk>, MeshError> {
    let field = GridArtifactField { grid, sdf };
    extract_artifact(&field, grid.params())
}

fn extract_artifact<F: LatticeField>(field: &F, params: &GridParams) -> Result<Vec<MeshChunk>, MeshError> {
    let chunks: Vec<MeshChunk> = params
        .all_chunks()
        .into_par_iter()
        .map(|c| extract_field(field, params, c, 0.0).expect("chunk in range"))
        .filter(|m| !m.is_empty())
        .collect();
    if chunks.is_empty() {
        return Err(MeshError::DegenerateArtifact);
    }
    Ok(chunks)
}

/// Keeps the latest mesh of every earth chunk and re-extracts dirty ones.
#[derive(Debug, Clone)]
pub struct EarthMesher {
    iso: f64,
    versions: HashMap<[usize; 3], u64>,
    chunks: BTreeMap<[usize; 3], MeshChunk>,
}

impl Default for EarthMesher {
    fn default() -> Self {
        Self::new(EARTH_ISOVALUE)
    }
}

impl EarthMesher {
    pub fn new(iso: f64) -> Self {
        EarthMesher {
            iso,
            versions: HashMap::new(),
            chunks: BTreeMap::new(),
        }
    }

    /// Re-extracts exactly the grid's dirty chunks, clears the dirty set, and
    /// returns the new meshes in chunk order with bumped versions.
    pub fn remesh_dirty(&mut self, grid: &mut VoxelGrid) -> Vec<MeshChunk> {
        let dirty: BTreeSet<[usize; 3]> = grid.take_dirty();
        let grid: &VoxelGrid = grid;
        let coords: Vec<[usize; 3]> = dirty.into_iter().collect();
        let mut fresh: Vec<MeshChunk> = coords
            .par_iter()
            .map(|&c| extract_chunk(grid, c, self.iso).expect("dirty chunk in range"))
            .collect();
        for mesh in &mut fresh {
            let v = self.versions.entry(mesh.chunk_coord).or_insert(0);
            *v += 1;
            mesh.version = *v;
            self.chunks.insert(mesh.chunk_coord, mesh.clone());
        }
        fresh
    }

    /// Latest mesh per chunk, in chunk order.
    pub fn chunks(&self) -> impl Iterator<Item = &MeshChunk> {
        self.chunks.values()
    }
}
