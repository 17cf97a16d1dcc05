//! 3D orientation field diffused from strand constraints.

use log::debug;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Aabb, VoxelGrid};
use crate::linalg::{GridOperator, Multigrid};
use crate::scene::StrandSet;
use crate::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct FieldParams {
    pub resolution: usize,
    /// Weight of the best-match strand constraints.
    pub w1: f64,
    /// Weight of the dilated query constraints.
    pub w2: f64,
    /// Query dilation radius in voxels.
    pub influence_radius: f64,
    /// Regrowth support: voxels within this many voxels of a constraint.
    pub support_radius: f64,
    /// Bounding-box enlargement factor.
    pub margin: f64,
}

impl FieldParams {
    pub fn from_config(cfg: &crate::SceneConfig) -> Self {
        FieldParams {
            resolution: cfg.field_resolution,
            w1: cfg.field_w1,
            w2: cfg.field_w2,
            influence_radius: cfg.influence_radius,
            support_radius: cfg.support_radius,
            margin: 1.1,
        }
    }
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams::from_config(&crate::SceneConfig::default())
    }
}

/// Solved field. `grid.occupied` marks the regrowth support.
#[derive(Debug, Clone)]
pub struct OrientationField {
    pub grid: VoxelGrid,
    /// Linear solution before normalization.
    pub raw: Vec<Vec3>,
    /// Unit directions (zero where the solution vanishes).
    pub directions: Vec<Vec3>,
    /// Averaged constraint directions of the best-match strands.
    pub best_constraints: Vec<Option<Vec3>>,
    /// Averaged, dilated constraint directions of the query strands.
    pub query_constraints: Vec<Option<Vec3>>,
    pub iterations: usize,
    pub residual: f64,
}

impl OrientationField {
    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn in_support(&self, p: &Vec3) -> bool {
        self.grid.locate(p).is_some_and(|[i, j, k]| self.grid.occupied[self.grid.index(i, j, k)])
    }

    /// Trilinear interpolation of the unit directions between voxel
    /// centers; `None` outside the lattice of centers.
    pub fn sample(&self, p: &Vec3) -> Option<Vec3> {
        let g = &self.grid;
        let u = (p - g.origin) / g.voxel;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = g.dims[a];
            if !(u[a] >= 0.0 && u[a] <= (n - 1) as f64) {
                return None;
            }
            let b = (u[a].floor() as usize).min(n.saturating_sub(2));
            base[a] = b;
            frac[a] = u[a] - b as f64;
        }
        let mut out = Vec3::zeros();
        for c in 0..8 {
            let off = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            let idx = g.index(
                (base[0] + off[0]).min(g.dims[0] - 1),
                (base[1] + off[1]).min(g.dims[1] - 1),
                (base[2] + off[2]).min(g.dims[2] - 1),
            );
            out += self.directions[idx] * w;
        }
        Some(out)
    }
}

/// Accumulates unit tangents of `set` into voxels, sampling each segment at
/// half-voxel spacing and splatting within `radius` voxels.
fn splat(set: &StrandSet, grid: &VoxelGrid, radius: f64) -> Vec<Option<Vec3>> {
    let mut acc = vec![Vec3::zeros(); grid.occupied.len()];
    let r = radius.floor() as isize;
    for s in &set.strands {
        let v = s.vertices();
        for w in v.windows(2) {
            let d = w[1] - w[0];
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let t = d / len;
            let n = ((len / (0.5 * grid.voxel)).ceil() as usize).max(1);
            for k in 0..n {
                let p = w[0] + d * ((k as f64 + 0.5) / n as f64);
                let Some([i, j, l]) = grid.locate(&p) else { continue };
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            if ((dx * dx + dy * dy + dz * dz) as f64) > radius * radius {
                                continue;
                            }
                            let (x, y, z) = (i as isize + dx, j as isize + dy, l as isize + dz);
                            if x < 0
                                || y < 0
                                || z < 0
                                || x >= grid.dims[0] as isize
                                || y >= grid.dims[1] as isize
                                || z >= grid.dims[2] as isize
                            {
                                continue;
                            }
                            acc[grid.index(x as usize, y as usize, z as usize)] += t;
                        }
                    }
                }
            }
        }
    }
    acc.into_iter()
        .map(|a| {
            let n = a.norm();
            (n > 1e-12).then(|| a / n)
        })
        .collect()
}

/// Grid covering `bounds` enlarged by `margin`.
pub fn field_grid(bounds: &Aabb, params: &FieldParams) -> VoxelGrid {
    VoxelGrid::covering(bounds, params.margin, params.resolution)
}

/// Solves `min sum_edges |v_a - v_b|^2 + w1 sum_C |v - c|^2 + w2 sum_Q |v - q|^2`
/// on a cubic lattice around `bounds`, one linear solve per component.
pub fn build_orientation_field(
    best: &StrandSet,
    query: &StrandSet,
    bounds: &Aabb,
    params: &FieldParams,
) -> Result<OrientationField> {
    let grid = field_grid(&bounds.merge(&best.bbox()).merge(&query.bbox()), params);
    build_on_grid(best, query, grid, params)
}

pub(crate) fn build_on_grid(
    best: &StrandSet,
    query: &StrandSet,
    mut grid: VoxelGrid,
    params: &FieldParams,
) -> Result<OrientationField> {
    let best_c = splat(best, &grid, 0.0);
    let query_c =
        if params.w2 > 0.0 { splat(query, &grid, params.influence_radius) } else { vec![None; grid.occupied.len()] };
    let n = grid.occupied.len();
    let mut data = vec![0.0; n];
    let mut rhs = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut sum = Vec3::zeros();
    let mut wsum = 0.0;
    for i in 0..n {
        for (c, w) in [(best_c[i], params.w1), (query_c[i], params.w2)] {
            if let Some(c) = c {
                if w > 0.0 {
                    data[i] += w;
                    for k in 0..3 {
                        rhs[k][i] += w * c[k];
                    }
                    sum += c * w;
                    wsum += w;
                }
            }
        }
    }
    if wsum == 0.0 {
        return Err(Error::EmptyResult("orientation field has no constrained voxel".into()));
    }
    let mean = sum / wsum;
    let mg = Multigrid::new(GridOperator::laplacian(grid.dims, data));
    let solved: Vec<(Vec<f64>, usize, f64)> = (0..3)
        .into_par_iter()
        .map(|k| {
            let mut x = vec![mean[k]; n];
            let (it, rel) = mg.solve(&rhs[k], &mut x, 1e-13, 400);
            (x, it, rel)
        })
        .collect();
    let residual = solved.iter().map(|s| s.2).fold(0.0, f64::max);
    let iterations = solved.iter().map(|s| s.1).max().unwrap_or(0);
    debug!("orientation field solved in {iterations} iterations, residual {residual:e}");
    if residual > 1e-8 {
        return Err(Error::Convergence { residual, tolerance: 1e-8 });
    }
    let raw: Vec<Vec3> = (0..n).map(|i| Vec3::new(solved[0].0[i], solved[1].0[i], solved[2].0[i])).collect();
    let directions = raw
        .iter()
        .map(|v| {
            let l = v.norm();
            if l > 1e-12 {
                v / l
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    let constrained: Vec<bool> = (0..n).map(|i| best_c[i].is_some() || query_c[i].is_some()).collect();
    grid.occupied = dilate(&grid, &constrained, params.support_radius);
    Ok(OrientationField {
        grid,
        raw,
        directions,
        best_constraints: best_c,
        query_constraints: query_c,
        iterations,
        residual,
    })
}

fn dilate(grid: &VoxelGrid, mask: &[bool], radius: f64) -> Vec<bool> {
    let r = radius.floor() as isize;
    let [nx, ny, nz] = grid.dims;
    let mut offsets = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if ((dx * dx + dy * dy + dz * dz) as f64) <= radius * radius {
                    offsets.push((dx, dy, dz));
                }
            }
        }
    }
    (0..mask.len())
        .into_par_iter()
        .map(|idx| {
            let i = (idx % nx) as isize;
            let j = ((idx / nx) % ny) as isize;
            let k = (idx / (nx * ny)) as isize;
            offsets.iter().any(|&(dx, dy, dz)| {
                let (x, y, z) = (i + dx, j + dy, k + dz);
                x >= 0
                    && y >= 0
                    && z >= 0
                    && x < nx as isize
                    && y < ny as isize
                    && z < nz as isize
                    && mask[grid.index(x as usize, y as usize, z as usize)]
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Strand;

    fn line(a: Vec3, b: Vec3) -> StrandSet {
        StrandSet::new(vec![Strand::new(vec![a, b]).unwrap()], "t")
    }

    fn params(res: usize, w2: f64) -> FieldParams {
        FieldParams { resolution: res, w2, ..FieldParams::default() }
    }

    #[test]
    fn constant_constraint_is_reproduced() {
        let best = line(Vec3::new(0.0, 0.1, 0.0), Vec3::new(0.0, -0.1, 0.0));
        let bounds = Aabb::from_points(&[Vec3::repeat(-0.1), Vec3::repeat(0.1)]);
        let f = build_orientation_field(&best, &StrandSet::default(), &bounds, &params(20, 0.0)).unwrap();
        for d in &f.directions {
            assert!((d - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn opposing_constraints_satisfy_maximum_principle() {
        let best = StrandSet::new(
            vec![
                Strand::new(vec![Vec3::new(-0.1, -0.1, 0.0), Vec3::new(-0.1, 0.1, 0.0)]).unwrap(),
                Strand::new(vec![Vec3::new(0.1, 0.1, 0.0), Vec3::new(0.1, -0.1, 0.0)]).unwrap(),
            ],
            "t",
        );
        let bounds = Aabb::from_points(&[Vec3::repeat(-0.1), Vec3::repeat(0.1)]);
        let f = build_orientation_field(&best, &StrandSet::default(), &bounds, &params(24, 0.0)).unwrap();
        for k in 0..3 {
            let cs: Vec<f64> = f.best_constraints.iter().flatten().map(|c| c[k]).collect();
            let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in &f.raw {
                assert!(v[k] >= lo - 1e-9 && v[k] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn query_weight_pulls_monotonically() {
        let best = line(Vec3::new(-0.1, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.0));
        let query = line(Vec3::new(0.0, 0.05, 0.05), Vec3::new(0.0, -0.05, 0.05));
        let bounds = Aabb::from_points(&[Vec3::repeat(-0.1), Vec3::repeat(0.1)]);
        let mut devs = Vec::new();
        for w2 in [0.0, 0.05, 0.1] {
            let f = build_orientation_field(&best, &query, &bounds, &params(24, w2)).unwrap();
            let q = splat(&query, &f.grid, 2.0);
            let dev: f64 = q.iter().zip(&f.directions).filter_map(|(q, d)| q.map(|q| (d - q).norm())).sum();
            devs.push(dev);
        }
        assert!(devs[1] < devs[0] && devs[2] < devs[1], "{devs:?}");
    }
}
