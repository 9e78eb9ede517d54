//! Welding and manifold checks over chunked meshes.

use std::collections::HashMap;

use super::MeshChunk;

/// A single indexed mesh with vertices merged by exact position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeldedMesh {
    pub positions: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeReport {
    pub edges: usize,
    /// Edges used by exactly one triangle.
    pub boundary: usize,
    /// Edges used by three or more triangles.
    pub non_manifold: usize,
}

impl EdgeReport {
    pub fn is_watertight(&self) -> bool {
        self.boundary == 0 && self.non_manifold == 0
    }
}

fn key(p: [f32; 3]) -> [u32; 3] {
    // +0.0 and -0.0 must weld together
    p.map(|c| if c == 0.0 { 0 } else { c.to_bits() })
}

pub fn weld<'a>(chunks: impl IntoIterator<Item = &'a MeshChunk>) -> WeldedMesh {
    let mut ids: HashMap<[u32; 3], u32> = HashMap::new();
    let mut out = WeldedMesh::default();
    for chunk in chunks {
        let remap: Vec<u32> = chunk
            .vertices
            .iter()
            .map(|&v| {
                *ids.entry(key(v)).or_insert_with(|| {
                    out.positions.push(v);
                    out.positions.len() as u32 - 1
                })
            })
            .collect();
        for t in chunk.indices.chunks_exact(3) {
            out.triangles.push([
                remap[t[0] as usize],
                remap[t[1] as usize],
                remap[t[2] as usize],
            ]);
        }
    }
    out
}

impl WeldedMesh {
    pub fn edge_report(&self) -> EdgeReport {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        EdgeReport {
            edges: counts.len(),
            boundary: counts.values().filter(|c| **c == 1).count(),
            non_manifold: counts.values().filter(|c| **c > 2).count(),
        }
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        let e = self.edge_report().edges as i64;
        self.positions.len() as i64 - e + self.triangles.len() as i64
    }
}
