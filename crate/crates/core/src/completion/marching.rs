//! Marching cubes over a sampled scalar grid, with shared vertices so closed
//! surfaces come out watertight.

use super::tables::TRIANGLE_TABLE;
use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::mesh::TriangleMesh;
use rayon::prelude::*;
use std::collections::HashMap;

/// Corner offsets in the classic table convention.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Edge -> corner pair, matching the triangle table.
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Regular grid of scalar samples over a box; `res` samples per axis.
pub struct ScalarGrid {
    pub bounds: Aabb,
    pub res: usize,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    /// Sample a function on the grid, parallel over z-slabs.
    pub fn sample(bounds: Aabb, res: usize, f: impl Fn(Vec3) -> f64 + Sync) -> ScalarGrid {
        assert!(res >= 2);
        let ext = bounds.extent();
        let step = Vec3::new(
            ext.x / (res - 1) as f64,
            ext.y / (res - 1) as f64,
            ext.z / (res - 1) as f64,
        );
        let values: Vec<f64> = (0..res)
            .into_par_iter()
            .flat_map_iter(|iz| {
                let f = &f;
                let z = bounds.min.z + iz as f64 * step.z;
                (0..res * res).map(move |i| {
                    let iy = i / res;
                    let ix = i % res;
                    f(Vec3::new(
                        bounds.min.x + ix as f64 * step.x,
                        bounds.min.y + iy as f64 * step.y,
                        z,
                    ))
                })
            })
            .collect();
        ScalarGrid {
            bounds,
            res,
            values,
        }
    }

    fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[(iz * self.res + iy) * self.res + ix]
    }

    fn position(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        let ext = self.bounds.extent();
        Vec3::new(
            self.bounds.min.x + ext.x * ix as f64 / (self.res - 1) as f64,
            self.bounds.min.y + ext.y * iy as f64 / (self.res - 1) as f64,
            self.bounds.min.z + ext.z * iz as f64 / (self.res - 1) as f64,
        )
    }

    pub fn cell_size(&self) -> f64 {
        let ext = self.bounds.extent();
        (ext.x.max(ext.y).max(ext.z)) / (self.res - 1) as f64
    }

    fn corner_id(&self, ix: usize, iy: usize, iz: usize) -> u64 {
        ((iz * self.res + iy) * self.res + ix) as u64
    }
}

/// Extract the `iso` level set. Vertices on shared cube edges are emitted
/// once, keyed by the edge's corner ids.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    let res = grid.res;
    let mut mesh = TriangleMesh::default();
    let mut edge_vertices: HashMap<(u64, u64), u32> = HashMap::new();
    for iz in 0..res - 1 {
        for iy in 0..res - 1 {
            for ix in 0..res - 1 {
                let mut values = [0.0; 8];
                let mut ids = [0u64; 8];
                let mut cube_index = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let (cx, cy, cz) = (ix + off[0], iy + off[1], iz + off[2]);
                    values[c] = grid.value(cx, cy, cz);
                    ids[c] = grid.corner_id(cx, cy, cz);
                    if values[c] < iso {
                        cube_index |= 1 << c;
                    }
                }
                if cube_index == 0 || cube_index == 255 {
                    continue;
                }
                let tri = &TRIANGLE_TABLE[cube_index];
                let mut t = 0;
                while t < tri.len() && tri[t] >= 0 {
                    let mut face = [0u32; 3];
                    for (slot, &edge) in tri[t..t + 3].iter().enumerate() {
                        let [a, b] = EDGES[edge as usize];
                        let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                        let vid = *edge_vertices.entry(key).or_insert_with(|| {
                            let (va, vb) = (values[a], values[b]);
                            let t_interp = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
                            let pa = grid.position(
                                ix + CORNERS[a][0],
                                iy + CORNERS[a][1],
                                iz + CORNERS[a][2],
                            );
                            let pb = grid.position(
                                ix + CORNERS[b][0],
                                iy + CORNERS[b][1],
                                iz + CORNERS[b][2],
                            );
                            let id = mesh.vertices.len() as u32;
                            mesh.vertices.push(pa + (pb - pa) * t_interp);
                            id
                        });
                        face[slot] = vid;
                    }
                    // Degenerate triangles can appear when the level set
                    // passes exactly through a corner; drop them.
                    if face[0] != face[1] && face[1] != face[2] && face[0] != face[2] {
                        mesh.faces.push(face);
                    }
                    t += 3;
                }
            }
        }
    }
    if mesh.is_empty() {
        return Err(Error::EmptyIsosurface);
    }
    Ok(mesh)
}

/// Keep only the largest face-connected component (guards against stray
/// blobs far from the trained region).
pub fn largest_component(mesh: &TriangleMesh) -> TriangleMesh {
    if mesh.faces.is_empty() {
        return mesh.clone();
    }
    // Union-find over vertices via shared faces.
    let mut parent: Vec<u32> = (0..mesh.vertices.len() as u32).collect();
    fn find(parent: &mut Vec<u32>, i: u32) -> u32 {
        let mut i = i;
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    for f in &mesh.faces {
        let a = find(&mut parent, f[0]);
        let b = find(&mut parent, f[1]);
        let c = find(&mut parent, f[2]);
        parent[b as usize] = a;
        parent[c as usize] = a;
    }
    let mut areas: HashMap<u32, usize> = HashMap::new();
    for f in &mesh.faces {
        let root = find(&mut parent, f[0]);
        *areas.entry(root).or_insert(0) += 1;
    }
    let best_root = *areas
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(k, _)| k)
        .unwrap();
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let mut out = TriangleMesh::default();
    for f in &mesh.faces {
        if find(&mut parent, f[0]) != best_root {
            continue;
        }
        let mut new_face = [0u32; 3];
        for (i, &v) in f.iter().enumerate() {
            let id = *remap.entry(v).or_insert_with(|| {
                let id = out.vertices.len() as u32;
                out.vertices.push(mesh.vertices[v as usize]);
                if !mesh.normals.is_empty() {
                    out.normals.push(mesh.normals[v as usize]);
                }
                id
            });
            new_face[i] = id;
        }
        out.faces.push(new_face);
    }
    out
}
