use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relicdig_core::mesher::obj::to_obj_string;
use relicdig_core::mesher::topology::{weld, WeldedMesh};
use relicdig_core::mesher::EARTH_ISOVALUE;
use relicdig_core::{
    mesh_all, mesh_artifact, Brush, BrushShape, EarthMesher, Falloff, MeshChunk, Pose, SdfNode,
    ToolSpec, VoxelGrid,
};

/// One cell diagonal at 0.02 m.
const DIAGONAL: f64 = 0.0347;

fn norm(v: [f32; 3]) -> f64 {
    v.iter().map(|c| (*c as f64).powi(2)).sum::<f64>().sqrt()
}

fn dot(a: [f32; 3], b: [f32; 3]) -> f64 {
    (0..3).map(|i| a[i] as f64 * b[i] as f64).sum()
}

/// Groups welded vertices into edge-connected components.
fn components(mesh: &WeldedMesh) -> Vec<Vec<u32>> {
    let mut parent: Vec<u32> = (0..mesh.positions.len() as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    for t in &mesh.triangles {
        for k in 1..3 {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
            parent[a as usize] = b;
        }
    }
    let mut groups: HashMap<u32, Vec<u32>> = HashMap::new();
    for v in 0..mesh.positions.len() as u32 {
        let root = find(&mut parent, v);
        groups.entry(root).or_default().push(v);
    }
    groups.into_values().collect()
}

fn speck() -> SdfNode {
    // smaller than a cell: no artifact cells at all
    SdfNode::sphere([0.001, 0.001, 0.001], 0.001)
}

fn sphere_fixture_grid() -> VoxelGrid {
    VoxelGrid::new(1.0, 0.02, &SdfNode::sphere([0.0; 3], 0.3)).unwrap()
}

#[test]
fn sphere_cavity_is_accurate_and_watertight() {
    let mut grid = VoxelGrid::new(1.0, 0.02, &speck()).unwrap();
    let cavity = Brush {
        shape: BrushShape::Sphere { radius: 0.3 },
        strength: 1.0,
        falloff: Falloff::Hard,
    };
    grid.carve(&cavity, &Pose::at([0.0; 3]));
    let chunks = mesh_all(&grid, EARTH_ISOVALUE);
    let welded = weld(&chunks);
    let report = welded.edge_report();
    assert!(report.is_watertight(), "{report:?}");

    let parts = components(&welded);
    assert_eq!(parts.len(), 2, "cavity plus the clod's outer skin");
    let inner = parts
        .iter()
        .min_by(|a, b| {
            let m = |p: &Vec<u32>| norm(welded.positions[p[0] as usize]);
            m(a).total_cmp(&m(b))
        })
        .unwrap();
    let worst = inner
        .iter()
        .map(|&v| (norm(welded.positions[v as usize]) - 0.3).abs())
        .fold(0.0, f64::max);
    assert!(worst <= DIAGONAL, "max radial error {worst}");
    assert!(worst <= 0.02, "marching cubes should land within a cell: {worst}");
    for part in &parts {
        if std::ptr::eq(part, inner) {
            continue;
        }
        for &v in part {
            let p = welded.positions[v as usize];
            let m = p.iter().map(|c| c.abs()).fold(0.0f32, f32::max);
            assert!((0.49..=0.51).contains(&m), "outer vertex {p:?}");
        }
    }

    // normals point out of the earth, i.e. toward the cavity center
    for chunk in &chunks {
        for (v, n) in chunk.vertices.iter().zip(&chunk.normals) {
            if norm(*v) < 0.4 {
                assert!(dot(*v, *n) < 0.0);
            }
        }
    }
}

#[test]
fn artifact_sphere_is_a_closed_genus_zero_surface() {
    let grid = sphere_fixture_grid();
    let chunks = mesh_artifact(&SdfNode::sphere([0.0; 3], 0.3), grid.params()).unwrap();
    let welded = weld(&chunks);
    assert!(welded.edge_report().is_watertight());
    assert_eq!(welded.euler_characteristic(), 2);
    for chunk in &chunks {
        for (v, n) in chunk.vertices.iter().zip(&chunk.normals) {
            assert!((norm(*v) - 0.3).abs() <= DIAGONAL);
            assert!(dot(*v, *n) > 0.0, "artifact normals face outward");
            assert!((norm(*n) - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn bundled_relic_meshes_are_watertight() {
    for spec in relicdig_core::builtin_relics() {
        let params = spec.grid_params().unwrap();
        let chunks = mesh_artifact(&spec.geometry, &params).unwrap();
        let report = weld(&chunks).edge_report();
        assert!(report.is_watertight(), "{}: {report:?}", spec.name);
    }
}

fn triangle_multiset<'a>(chunks: impl IntoIterator<Item = &'a MeshChunk>) -> Vec<[[u32; 3]; 3]> {
    let mut out: Vec<[[u32; 3]; 3]> = chunks
        .into_iter()
        .flat_map(|c| c.triangles())
        .map(|t| t.map(|v| v.map(f32::to_bits)))
        .collect();
    out.sort_unstable();
    out
}

fn assert_same_as_full(mesher: &EarthMesher, grid: &VoxelGrid) {
    let mut full = mesh_all(grid, EARTH_ISOVALUE);
    full.sort_by_key(|c| c.chunk_coord);
    let incremental: Vec<&MeshChunk> = mesher.chunks().collect();
    assert_eq!(incremental.len(), full.len());
    for (a, b) in incremental.iter().zip(&full) {
        assert_eq!(a.chunk_coord, b.chunk_coord);
        assert_eq!(a.vertices, b.vertices, "chunk {:?}", a.chunk_coord);
        assert_eq!(a.normals, b.normals, "chunk {:?}", a.chunk_coord);
        assert_eq!(a.indices, b.indices, "chunk {:?}", a.chunk_coord);
    }
    assert_eq!(triangle_multiset(incremental), triangle_multiset(&full));
}

#[test]
fn incremental_remesh_matches_full_after_random_strokes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut grid = sphere_fixture_grid();
    let mut mesher = EarthMesher::default();
    mesher.remesh_dirty(&mut grid);
    let tools = [ToolSpec::hammer().brush(), ToolSpec::shovel().brush()];
    for k in 0..1000 {
        let brush = &tools[rng.random_range(0..2)];
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let pose = Pose {
            position: std::array::from_fn(|_| rng.random_range(-0.55..0.55)),
            rotation: q,
        };
        grid.carve(brush, &pose);
        if k % 7 == 0 {
            mesher.remesh_dirty(&mut grid);
        }
    }
    mesher.remesh_dirty(&mut grid);
    assert!(grid.dirty_chunks().is_empty());
    assert_same_as_full(&mesher, &grid);
    assert!(weld(mesher.chunks()).edge_report().is_watertight());
}

#[test]
fn carve_across_chunk_face_reemits_both_chunks() {
    let mut grid = sphere_fixture_grid();
    let mut mesher = EarthMesher::default();
    mesher.remesh_dirty(&mut grid);
    // x = -0.18 is the face between cells 15 and 16, i.e. between chunks 0 and 1
    let pose = Pose::at([-0.18, 0.4, 0.4]);
    grid.carve(&ToolSpec::hammer().brush(), &pose);
    let dirty = grid.dirty_chunks().clone();
    assert!(dirty.contains(&[0, 2, 2]) && dirty.contains(&[1, 2, 2]), "{dirty:?}");
    let fresh = mesher.remesh_dirty(&mut grid);
    let coords: Vec<[usize; 3]> = fresh.iter().map(|c| c.chunk_coord).collect();
    assert!(coords.contains(&[0, 2, 2]) && coords.contains(&[1, 2, 2]));
    assert!(fresh.iter().all(|c| c.version == 2));
    assert_same_as_full(&mesher, &grid);
}

#[test]
fn obj_export_preserves_edge_sharing() {
    let grid = sphere_fixture_grid();
    let chunks = mesh_artifact(&SdfNode::sphere([0.0; 3], 0.3), grid.params()).unwrap();
    let text = to_obj_string(&[("artifact", &chunks)]);
    let mut positions: Vec<[u32; 3]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => positions.push(std::array::from_fn(|_| {
                parts.next().unwrap().parse::<f32>().unwrap().to_bits()
            })),
            Some("f") => faces.push(std::array::from_fn(|_| {
                parts.next().unwrap().split('/').next().unwrap().parse::<usize>().unwrap() - 1
            })),
            _ => {}
        }
    }
    // weld by printed position, then every edge must be used exactly twice
    let mut ids = HashMap::new();
    let remap: Vec<usize> = positions
        .iter()
        .map(|p| {
            let n = ids.len();
            *ids.entry(*p).or_insert(n)
        })
        .collect();
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &faces {
        for k in 0..3 {
            let (a, b) = (remap[f[k]], remap[f[(k + 1) % 3]]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    assert!(!faces.is_empty());
    assert!(edges.values().all(|c| *c == 2));
}

fn small_grid() -> VoxelGrid {
    // 20 cells per axis -> two chunks per axis
    VoxelGrid::new(0.4, 0.02, &SdfNode::sphere([0.0; 3], 0.08)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn incremental_equals_full_for_any_stroke_sequence(
        strokes in prop::collection::vec(
            (
                prop::array::uniform3(-0.25f64..0.25),
                prop::array::uniform4(-1.0f64..1.0),
                0.01f64..0.1,
                0.2f64..1.0,
                any::<bool>(),
                any::<bool>(),
            ),
            1..25,
        )
    ) {
        let mut grid = small_grid();
        let mut mesher = EarthMesher::default();
        mesher.remesh_dirty(&mut grid);
        for (i, (position, rotation, size, strength, boxy, linear)) in strokes.into_iter().enumerate() {
            let brush = Brush {
                shape: if boxy {
                    BrushShape::Box { half_extents: [size, size / 2.0, size / 4.0] }
                } else {
                    BrushShape::Sphere { radius: size }
                },
                strength,
                falloff: if linear { Falloff::Linear } else { Falloff::Hard },
            };
            let before = grid.removed_total();
            let r = grid.carve(&brush, &Pose { position, rotation });
            prop_assert!(r.removed_volume >= 0.0);
            prop_assert!((grid.removed_total() - before - r.removed_volume).abs() < 1e-12);
            prop_assert_eq!(r.cells_emptied, r.emptied_cells.len());
            if i % 3 == 0 {
                mesher.remesh_dirty(&mut grid);
            }
        }
        mesher.remesh_dirty(&mut grid);
        let full = mesh_all(&grid, EARTH_ISOVALUE);
        let inc: Vec<&MeshChunk> = mesher.chunks().collect();
        prop_assert_eq!(triangle_multiset(inc), triangle_multiset(&full));
        prop_assert!(weld(&full).edge_report().is_watertight());
        prop_assert!(grid.densities().iter().all(|d| (0.0..=1.0).contains(d)));
    }
}
