//! Regrowing strands from scalp roots through an orientation field.

use rayon::prelude::*;

use super::field::OrientationField;
use crate::error::{Error, Result};
use crate::geom::{Bvh, TriangleMesh};
use crate::scene::{Strand, StrandSet, SCALP_ROOT};
use crate::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct RegrowParams {
    /// Step length in voxels.
    pub step: f64,
    pub max_steps: usize,
    /// Interpolated field magnitude below which growth stops.
    pub epsilon: f64,
    /// Roots are pushed this many voxels out along the head normal.
    pub root_offset: f64,
}

impl RegrowParams {
    pub fn from_config(cfg: &crate::SceneConfig) -> Self {
        RegrowParams {
            step: cfg.regrow_step,
            max_steps: cfg.regrow_max_steps,
            epsilon: cfg.regrow_epsilon,
            root_offset: cfg.regrow_root_offset,
        }
    }
}

impl Default for RegrowParams {
    fn default() -> Self {
        RegrowParams::from_config(&crate::SceneConfig::default())
    }
}

#[derive(Debug, Clone)]
pub struct Regrown {
    pub strands: StrandSet,
    /// Number of roots growth was started from.
    pub attempted: usize,
}

/// Grows one strand per `scalp_root` vertex of `head` with midpoint steps of
/// fixed length. A strand ends after `max_steps`, when the field fades, when
/// it leaves the grid or the constraint support, or just before a step that
/// would cross the head surface.
pub fn regrow_strands(field: &OrientationField, head: &TriangleMesh, params: &RegrowParams) -> Result<Regrown> {
    let roots = head.flagged(SCALP_ROOT);
    if roots.is_empty() {
        return Err(Error::Argument("head mesh has no scalp_root vertices".into()));
    }
    let normals = head.vertex_normals();
    let bvh = Bvh::new(head);
    let h = params.step * field.grid.voxel;
    let strands: Vec<Strand> = roots
        .par_iter()
        .filter_map(|&r| {
            let start = head.vertices[r] + normals[r] * (params.root_offset * field.grid.voxel);
            if bvh.contains(&start) {
                return None;
            }
            let pts = grow(field, &bvh, start, h, params);
            Strand::new(pts).ok()
        })
        .collect();
    Ok(Regrown { strands: StrandSet::new(strands, "regrown"), attempted: roots.len() })
}

fn grow(field: &OrientationField, head: &Bvh, start: Vec3, h: f64, params: &RegrowParams) -> Vec<Vec3> {
    let mut pts = vec![start];
    let mut x = start;
    let unit = |v: Vec3| {
        let n = v.norm();
        (n >= params.epsilon).then(|| v / n)
    };
    for _ in 0..params.max_steps {
        if !field.in_support(&x) {
            break;
        }
        let Some(k1) = field.sample(&x).and_then(unit) else {
            break;
        };
        let mid = x + k1 * (0.5 * h);
        let Some(k2) = field.sample(&mid).and_then(unit) else {
            break;
        };
        let next = x + k2 * h;
        if head.segment_hit(&x, &next).is_some() || head.contains(&next) {
            break;
        }
        pts.push(next);
        x = next;
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{uv_sphere, Aabb, VoxelGrid};

    fn constant_field(dir: Vec3, res: usize) -> OrientationField {
        let bounds = Aabb::from_points(&[Vec3::repeat(-0.2), Vec3::repeat(0.2)]);
        let mut grid = VoxelGrid::covering(&bounds, 1.0, res);
        let n = grid.occupied.len();
        grid.occupied = vec![true; n];
        OrientationField {
            grid,
            raw: vec![dir; n],
            directions: vec![dir; n],
            best_constraints: vec![None; n],
            query_constraints: vec![None; n],
            iterations: 0,
            residual: 0.0,
        }
    }

    fn head_with_roots() -> TriangleMesh {
        let mut head = uv_sphere(Vec3::zeros(), 0.1, 16, 32);
        let flags = head.vertices.iter().map(|v| v.y > 0.09).collect();
        head.set_flag(SCALP_ROOT, flags);
        head
    }

    #[test]
    fn constant_upward_field_gives_straight_strands() {
        let f = constant_field(Vec3::new(0.0, 1.0, 0.0), 40);
        let head = head_with_roots();
        let params = RegrowParams { max_steps: 5, ..RegrowParams::default() };
        let out = regrow_strands(&f, &head, &params).unwrap();
        assert_eq!(out.attempted, head.flagged(SCALP_ROOT).len());
        assert_eq!(out.strands.len(), out.attempted);
        for s in &out.strands.strands {
            assert_eq!(s.len(), 6);
            for t in s.tangents() {
                assert!((t - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn strands_stop_at_the_head() {
        // downward field drives roots on top straight into the sphere
        let f = constant_field(Vec3::new(0.0, -1.0, 0.0), 40);
        let head = head_with_roots();
        let out = regrow_strands(&f, &head, &RegrowParams::default()).unwrap();
        let bvh = Bvh::new(&head);
        for s in &out.strands.strands {
            for p in s.vertices() {
                assert!(!bvh.contains(p));
            }
        }
    }

    #[test]
    fn no_roots_is_an_error() {
        let f = constant_field(Vec3::new(0.0, 1.0, 0.0), 8);
        let head = uv_sphere(Vec3::zeros(), 0.1, 8, 8);
        assert!(regrow_strands(&f, &head, &RegrowParams::default()).is_err());
    }
}
