//! Boolean voxel grids and surface extraction.
//!
//! Surfaces are extracted with a binary surface-nets scheme: one vertex per
//! cell whose eight corner samples disagree, placed at the mean of the
//! midpoints of the sign-changing cell edges, and one quad per
//! sign-changing sample edge. Samples outside the grid count as empty, so
//! the result is always closed. The output depends only on the occupancy,
//! which makes extraction deterministic.

use std::collections::BTreeMap;

use super::mesh::{Aabb, TriangleMesh};
use crate::Vec3;

/// Regular grid of boolean samples. Sample `(i, j, k)` sits at
/// `origin + voxel * (i, j, k)` (voxel centers).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub voxel: f64,
    pub dims: [usize; 3],
    pub occupied: Vec<bool>,
}

impl VoxelGrid {
    pub fn new(origin: Vec3, voxel: f64, dims: [usize; 3]) -> Self {
        VoxelGrid { origin, voxel, dims, occupied: vec![false; dims[0] * dims[1] * dims[2]] }
    }

    /// Cubic grid of `resolution^3` voxels covering a cube of side
    /// `scale * max_extent(bounds)` centered on `bounds`.
    pub fn covering(bounds: &Aabb, scale: f64, resolution: usize) -> Self {
        let side = bounds.extent().max() * scale;
        let voxel = side / resolution as f64;
        let origin = bounds.center() - Vec3::repeat(side / 2.0) + Vec3::repeat(voxel / 2.0);
        VoxelGrid::new(origin, voxel, [resolution; 3])
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.voxel
    }

    pub fn center_of(&self, idx: usize) -> Vec3 {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        self.center(i, j, k)
    }

    /// Voxel containing `p`, if inside the grid.
    pub fn locate(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel + 0.5).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }

    pub fn get(&self, i: isize, j: isize, k: isize) -> bool {
        if i < 0
            || j < 0
            || k < 0
            || i as usize >= self.dims[0]
            || j as usize >= self.dims[1]
            || k as usize >= self.dims[2]
        {
            return false;
        }
        self.occupied[self.index(i as usize, j as usize, k as usize)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn occupied_volume(&self) -> f64 {
        self.occupied_count() as f64 * self.voxel.powi(3)
    }

    /// Bounds of the voxel cells (not the centers).
    pub fn bounds(&self) -> Aabb {
        let half = Vec3::repeat(self.voxel / 2.0);
        let far = self.center(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1);
        Aabb { min: self.origin - half, max: far + half }
    }

    pub fn extract_surface(&self) -> TriangleMesh {
        let [nx, ny, nz] = self.dims;
        // Cells are indexed from -1 to n-1 along each axis (shifted by one).
        let cdims = [nx + 1, ny + 1, nz + 1];
        let cell_index = |c: [isize; 3]| -> usize {
            (((c[2] + 1) as usize * cdims[1]) + (c[1] + 1) as usize) * cdims[0] + (c[0] + 1) as usize
        };
        let mut cell_vertex = vec![u32::MAX; cdims[0] * cdims[1] * cdims[2]];
        let mut vertices = Vec::new();

        const CORNERS: [[isize; 3]; 8] =
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]];
        const EDGES: [(usize, usize); 12] =
            [(0, 1), (2, 3), (4, 5), (6, 7), (0, 2), (1, 3), (4, 6), (5, 7), (0, 4), (1, 5), (2, 6), (3, 7)];

        for ck in -1..nz as isize {
            for cj in -1..ny as isize {
                for ci in -1..nx as isize {
                    let mut occ = [false; 8];
                    let mut any = false;
                    let mut all = true;
                    for (n, c) in CORNERS.iter().enumerate() {
                        occ[n] = self.get(ci + c[0], cj + c[1], ck + c[2]);
                        any |= occ[n];
                        all &= occ[n];
                    }
                    if !any || all {
                        continue;
                    }
                    let mut sum = Vec3::zeros();
                    let mut cnt = 0.0;
                    for &(a, b) in &EDGES {
                        if occ[a] != occ[b] {
                            let ca = CORNERS[a];
                            let cb = CORNERS[b];
                            sum += Vec3::new(
                                (ca[0] + cb[0]) as f64 * 0.5 + ci as f64,
                                (ca[1] + cb[1]) as f64 * 0.5 + cj as f64,
                                (ca[2] + cb[2]) as f64 * 0.5 + ck as f64,
                            );
                            cnt += 1.0;
                        }
                    }
                    cell_vertex[cell_index([ci, cj, ck])] = vertices.len() as u32;
                    vertices.push(self.origin + sum / cnt * self.voxel);
                }
            }
        }

        let mut faces = Vec::new();
        for axis in 0..3 {
            let u = (axis + 1) % 3;
            let v = (axis + 2) % 3;
            let mut lo = [0isize; 3];
            let mut hi = [self.dims[0] as isize, self.dims[1] as isize, self.dims[2] as isize];
            lo[axis] = -1;
            hi[axis] -= 1;
            for k in lo[2]..hi[2] {
                for j in lo[1]..hi[1] {
                    for i in lo[0]..hi[0] {
                        let s = [i, j, k];
                        let mut t = s;
                        t[axis] += 1;
                        let a = self.get(s[0], s[1], s[2]);
                        let b = self.get(t[0], t[1], t[2]);
                        if a == b {
                            continue;
                        }
                        let cell = |du: isize, dv: isize| {
                            let mut c = s;
                            c[u] += du;
                            c[v] += dv;
                            cell_vertex[cell_index(c)]
                        };
                        let mut quad = [cell(-1, -1), cell(0, -1), cell(0, 0), cell(-1, 0)];
                        if !a {
                            quad.reverse();
                        }
                        debug_assert!(quad.iter().all(|&q| q != u32::MAX));
                        let p = |q: u32| vertices[q as usize];
                        let d02 = (p(quad[0]) - p(quad[2])).norm_squared();
                        let d13 = (p(quad[1]) - p(quad[3])).norm_squared();
                        if d02 <= d13 {
                            faces.push([quad[0], quad[1], quad[2]]);
                            faces.push([quad[0], quad[2], quad[3]]);
                        } else {
                            faces.push([quad[0], quad[1], quad[3]]);
                            faces.push([quad[1], quad[2], quad[3]]);
                        }
                    }
                }
            }
        }
        TriangleMesh { vertices, faces, flags: BTreeMap::new() }
    }
}
