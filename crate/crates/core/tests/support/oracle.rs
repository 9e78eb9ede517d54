//! Brute-force model of a clod around a centered sphere relic. Shares no code
//! with the engine beyond its public types.

use relicdig_core::{BrushShape, Pose, SdfNode, VoxelGrid};

pub const EDGE: f64 = 1.0;
pub const CELL: f64 = 0.02;
pub const N: usize = 50;
pub const RADIUS: f64 = 0.3;

pub fn center(i: usize) -> f64 {
    -EDGE / 2.0 + (i as f64 + 0.5) * CELL
}

pub fn idx(x: usize, y: usize, z: usize) -> usize {
    (z * N + y) * N + x
}

/// `v` rotated by the inverse of unit quaternion `q = [w, x, y, z]`.
pub fn unrotate(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let (w, u) = (q[0], [-q[1], -q[2], -q[3]]);
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let t = cross(u, v).map(|c| 2.0 * c);
    let ut = cross(u, t);
    [0, 1, 2].map(|a| v[a] + w * t[a] + ut[a])
}

pub struct Oracle {
    pub density: Vec<f32>,
    pub artifact: Vec<bool>,
}

impl Oracle {
    pub fn new() -> Self {
        let mut artifact = vec![false; N * N * N];
        for z in 0..N {
            for y in 0..N {
                for x in 0..N {
                    let r = (center(x).powi(2) + center(y).powi(2) + center(z).powi(2)).sqrt();
                    artifact[idx(x, y, z)] = r <= RADIUS;
                }
            }
        }
        let density = artifact.iter().map(|a| if *a { 0.0 } else { 1.0 }).collect();
        Oracle { density, artifact }
    }

    pub fn empty(&self, i: usize) -> bool {
        !self.artifact[i] && self.density[i] < 0.5
    }

    /// Applies a HARD brush; returns (cells_changed, removed_volume, emptied).
    pub fn carve(&mut self, shape: BrushShape, strength: f64, pose: &Pose) -> (usize, f64, usize) {
        let mut changed = 0;
        let mut emptied = 0;
        let mut removed = 0f64;
        for z in 0..N {
            for y in 0..N {
                for x in 0..N {
                    let i = idx(x, y, z);
                    if self.artifact[i] || self.empty(i) {
                        continue;
                    }
                    let d = [
                        center(x) - pose.position[0],
                        center(y) - pose.position[1],
                        center(z) - pose.position[2],
                    ];
                    let l = unrotate(pose.rotation, d);
                    let inside = match shape {
                        BrushShape::Sphere { radius } => {
                            (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt() <= radius
                        }
                        BrushShape::Box { half_extents } => {
                            (0..3).all(|a| l[a].abs() <= half_extents[a])
                        }
                    };
                    if !inside {
                        continue;
                    }
                    let old = self.density[i];
                    let new = (old - strength as f32).max(0.0);
                    if new != old {
                        changed += 1;
                        removed += (old - new) as f64;
                        self.density[i] = new;
                        if new < 0.5 {
                            emptied += 1;
                        }
                    }
                }
            }
        }
        (changed, removed * CELL.powi(3), emptied)
    }

    /// (surface cells, exposed surface cells) by scanning all six neighbors of every cell.
    pub fn exposure(&self) -> (usize, usize) {
        let (mut surface, mut exposed) = (0, 0);
        for z in 0..N {
            for y in 0..N {
                for x in 0..N {
                    if !self.artifact[idx(x, y, z)] {
                        continue;
                    }
                    let mut on_surface = false;
                    let mut open = false;
                    for (dx, dy, dz) in [
                        (-1i64, 0i64, 0i64),
                        (1, 0, 0),
                        (0, -1, 0),
                        (0, 1, 0),
                        (0, 0, -1),
                        (0, 0, 1),
                    ] {
                        let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                        if [nx, ny, nz].iter().any(|c| *c < 0 || *c >= N as i64) {
                            on_surface = true;
                            open = true;
                            continue;
                        }
                        let j = idx(nx as usize, ny as usize, nz as usize);
                        if !self.artifact[j] {
                            on_surface = true;
                        }
                        if self.empty(j) {
                            open = true;
                        }
                    }
                    if on_surface {
                        surface += 1;
                        if open {
                            exposed += 1;
                        }
                    }
                }
            }
        }
        (surface, exposed)
    }
}

pub fn grid() -> VoxelGrid {
    VoxelGrid::new(EDGE, CELL, &SdfNode::sphere([0.0; 3], RADIUS)).unwrap()
}
