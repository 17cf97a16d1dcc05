//! Optimal-step non-rigid ICP with per-vertex affine transforms.

use std::collections::{BTreeSet, HashSet};

use log::debug;
use nalgebra::{Matrix4, Matrix4x3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Bvh, TriangleMesh};
use crate::linalg::{pcg, CsrMatrix, EnvelopeCholesky};
use crate::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct RegistrationParams {
    pub stiffness_start: f64,
    pub stiffness_end: f64,
    pub levels: usize,
    pub iterations: usize,
    /// Symmetric mean closest-point distance above which the result is a
    /// failure.
    pub max_residual: f64,
}

impl RegistrationParams {
    pub fn from_config(cfg: &crate::SceneConfig) -> Self {
        RegistrationParams {
            stiffness_start: cfg.reg_stiffness_start,
            stiffness_end: cfg.reg_stiffness_end,
            levels: cfg.reg_levels,
            iterations: cfg.reg_iterations,
            max_residual: cfg.reg_max_residual,
        }
    }

    fn stiffness(&self, level: usize) -> f64 {
        if self.levels <= 1 {
            return self.stiffness_end;
        }
        let t = level as f64 / (self.levels - 1) as f64;
        self.stiffness_start * (self.stiffness_end / self.stiffness_start).powf(t)
    }
}

#[derive(Debug, Clone)]
pub struct Registration {
    /// Registered template vertices.
    pub positions: Vec<Vec3>,
    /// Closest point on the target for every registered vertex.
    pub targets: Vec<Vec3>,
    /// Mean template-to-target distance after each stiffness level.
    pub level_residuals: Vec<f64>,
    /// max(mean template-to-target, mean target-to-template) at the end.
    pub residual: f64,
}

/// Normalizing similarity: `(p - center) * scale`.
#[derive(Debug, Clone, Copy)]
struct Frame {
    center: Vec3,
    scale: f64,
}

impl Frame {
    fn to(&self, p: &Vec3) -> Vec3 {
        (p - self.center) * self.scale
    }
    fn from(&self, p: &Vec3) -> Vec3 {
        p / self.scale + self.center
    }
}

fn unique_edges(mesh: &TriangleMesh) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k] as usize, f[(k + 1) % 3] as usize);
            set.insert((a.min(b), a.max(b)));
        }
    }
    set.into_iter().collect()
}

/// Whether a closest hit lies on a boundary edge or boundary vertex of the
/// target.
fn on_boundary(
    target: &TriangleMesh,
    boundary: &HashSet<(u32, u32)>,
    bverts: &HashSet<u32>,
    tri: usize,
    bary: [f64; 3],
) -> bool {
    let f = target.faces[tri];
    let zero: Vec<usize> = (0..3).filter(|&k| bary[k] <= 1e-9).collect();
    match zero.len() {
        1 => {
            let k = zero[0];
            let (a, b) = (f[(k + 1) % 3], f[(k + 2) % 3]);
            boundary.contains(&(a.min(b), a.max(b)))
        }
        2 => {
            let k = (0..3).find(|k| !zero.contains(k)).unwrap();
            bverts.contains(&f[k])
        }
        _ => false,
    }
}

fn mean_distance(from: &[Vec3], to: &Bvh) -> f64 {
    let d: Vec<f64> = from.par_iter().map(|p| to.closest_point(p).map_or(0.0, |h| h.distance2.sqrt())).collect();
    d.iter().sum::<f64>() / d.len().max(1) as f64
}

/// Registers `template` onto `target`. Stiffness decreases geometrically from
/// `stiffness_start` to `stiffness_end`; each level runs up to `iterations`
/// closest-point/solve rounds. Correspondences landing on the target
/// boundary or facing away by more than 60 degrees are ignored.
pub fn register_mesh(
    template: &TriangleMesh,
    target: &TriangleMesh,
    params: &RegistrationParams,
) -> Result<Registration> {
    if template.faces.is_empty() || target.faces.is_empty() {
        return Err(Error::Argument("registration needs two non-empty meshes".into()));
    }
    let bb = template.bbox();
    let frame = Frame { center: bb.center(), scale: 1.0 / bb.diagonal().max(1e-12) };
    let n = template.vertices.len();
    let src: Vec<Vec3> = template.vertices.iter().map(|v| frame.to(v)).collect();
    let mut tgt_mesh = target.clone();
    tgt_mesh.transform_points(|p| frame.to(p));
    let tgt_bvh = Bvh::new(&tgt_mesh);
    let tgt_normals = face_normals(&tgt_mesh);
    let boundary = tgt_mesh.boundary_edges();
    let bverts: HashSet<u32> = boundary.iter().flat_map(|&(a, b)| [a, b]).collect();
    let edges = unique_edges(template);

    let mut x: Vec<Matrix4x3<f64>> = vec![identity_affine(); n];
    let mut level_residuals = Vec::with_capacity(params.levels);
    let mut increases = 0;
    for level in 0..params.levels {
        let alpha = params.stiffness(level);
        let mut factor: Option<(CsrMatrix, EnvelopeCholesky)> = None;
        for _ in 0..params.iterations {
            let cur = deformed(&src, &x);
            let mut work = template.clone();
            work.vertices = cur.clone();
            let normals = work.vertex_normals();
            let corr: Vec<(Vec3, f64)> = cur
                .par_iter()
                .zip(&normals)
                .map(|(p, nrm)| {
                    let h = tgt_bvh.closest_point(p).unwrap();
                    let mut w = 1.0;
                    if on_boundary(&tgt_mesh, &boundary, &bverts, h.triangle, h.bary) {
                        w = 0.0;
                    }
                    if nrm.norm() > 0.0 && nrm.dot(&tgt_normals[h.triangle]) < 0.5 {
                        w = 0.0;
                    }
                    (h.point, w)
                })
                .collect();
            let (a, b) = assemble(&src, &edges, &corr, alpha, &x);
            let prev = x.clone();
            let sol = match &factor {
                None => {
                    let f = EnvelopeCholesky::factor(&a)?;
                    let cols: Vec<Vec<f64>> = (0..3).map(|c| f.solve_refined(&a, &b[c], 1).0).collect();
                    factor = Some((a, f));
                    cols
                }
                Some((_, f)) => {
                    let x0 = flatten(&x);
                    (0..3)
                        .map(|c| {
                            let mut xc = x0[c].clone();
                            pcg(
                                &mut |v, out| out.copy_from_slice(&a.mul_vec(v)),
                                &mut |r, z| z.copy_from_slice(&f.solve(r)),
                                &b[c],
                                &mut xc,
                                1e-10,
                                200,
                            );
                            xc
                        })
                        .collect()
                }
            };
            x = unflatten(&sol, n);
            let change =
                x.iter().zip(&prev).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt() / (n as f64).sqrt();
            if change < 1e-5 {
                break;
            }
        }
        let cur = deformed(&src, &x);
        let res = mean_distance(&cur, &tgt_bvh) / frame.scale;
        debug!("registration level {level} (stiffness {alpha:.3}): mean distance {res:.6}");
        if let Some(&last) = level_residuals.last() {
            if res > last {
                increases += 1;
                if increases >= 3 {
                    return Err(Error::Registration(format!(
                        "mean closest-point distance increased for 3 consecutive stiffness levels (now {res:.5})"
                    )));
                }
            } else {
                increases = 0;
            }
        }
        level_residuals.push(res);
    }
    let cur = deformed(&src, &x);
    let mut work = template.clone();
    work.vertices = cur.clone();
    let forward = mean_distance(&cur, &tgt_bvh);
    let backward = mean_distance(&tgt_mesh.vertices, &Bvh::new(&work));
    let residual = forward.max(backward) / frame.scale;
    if residual > params.max_residual {
        return Err(Error::Registration(format!(
            "fitting error {residual:.5} exceeds {:.5} (template-to-hull {:.5}, hull-to-template {:.5})",
            params.max_residual,
            forward / frame.scale,
            backward / frame.scale
        )));
    }
    let targets: Vec<Vec3> = cur.par_iter().map(|p| frame.from(&tgt_bvh.closest_point(p).unwrap().point)).collect();
    Ok(Registration { positions: cur.iter().map(|p| frame.from(p)).collect(), targets, level_residuals, residual })
}

fn identity_affine() -> Matrix4x3<f64> {
    let mut m = Matrix4x3::zeros();
    m[(0, 0)] = 1.0;
    m[(1, 1)] = 1.0;
    m[(2, 2)] = 1.0;
    m
}

fn deformed(src: &[Vec3], x: &[Matrix4x3<f64>]) -> Vec<Vec3> {
    src.iter()
        .zip(x)
        .map(|(v, xi)| {
            let h = nalgebra::Vector4::new(v.x, v.y, v.z, 1.0);
            xi.transpose() * h
        })
        .collect()
}

fn face_normals(mesh: &TriangleMesh) -> Vec<Vec3> {
    (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            let n = (b - a).cross(&(c - a));
            let l = n.norm();
            if l > 0.0 {
                n / l
            } else {
                n
            }
        })
        .collect()
}

fn flatten(x: &[Matrix4x3<f64>]) -> [Vec<f64>; 3] {
    let mut out = [vec![0.0; 4 * x.len()], vec![0.0; 4 * x.len()], vec![0.0; 4 * x.len()]];
    for (i, m) in x.iter().enumerate() {
        for r in 0..4 {
            for c in 0..3 {
                out[c][4 * i + r] = m[(r, c)];
            }
        }
    }
    out
}

fn unflatten(cols: &[Vec<f64>], n: usize) -> Vec<Matrix4x3<f64>> {
    (0..n).map(|i| Matrix4x3::from_fn(|r, c| cols[c][4 * i + r])).collect()
}

/// Normal equations of the stiffness + data energy, with a tiny proximal
/// term towards the current transforms so every block stays definite.
fn assemble(
    src: &[Vec3],
    edges: &[(usize, usize)],
    corr: &[(Vec3, f64)],
    alpha: f64,
    current: &[Matrix4x3<f64>],
) -> (CsrMatrix, [Vec<f64>; 3]) {
    let n = src.len();
    let gamma2 = 1.0;
    let g = [1.0, 1.0, 1.0, gamma2];
    let a2 = alpha * alpha;
    let prox = 1e-8;
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(16 * n + 8 * edges.len());
    for &(i, j) in edges {
        for (r, gr) in g.iter().enumerate() {
            let v = a2 * gr;
            trip.push((4 * i + r, 4 * i + r, v));
            trip.push((4 * j + r, 4 * j + r, v));
            trip.push((4 * i + r, 4 * j + r, -v));
            trip.push((4 * j + r, 4 * i + r, -v));
        }
    }
    let mut rhs = [vec![0.0; 4 * n], vec![0.0; 4 * n], vec![0.0; 4 * n]];
    for i in 0..n {
        let v = src[i];
        let h = nalgebra::Vector4::new(v.x, v.y, v.z, 1.0);
        let (u, w) = corr[i];
        let w2 = w * w;
        let block: Matrix4<f64> = h * h.transpose() * w2 + Matrix4::identity() * prox;
        for r in 0..4 {
            for c in 0..4 {
                if block[(r, c)] != 0.0 {
                    trip.push((4 * i + r, 4 * i + c, block[(r, c)]));
                }
            }
            for k in 0..3 {
                rhs[k][4 * i + r] += w2 * h[r] * u[k] + prox * current[i][(r, k)];
            }
        }
    }
    (CsrMatrix::from_triplets(4 * n, trip), rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::uv_sphere;

    fn cap(scale: f64) -> TriangleMesh {
        // upper part of a sphere: an open shell like a hair region
        let s = uv_sphere(Vec3::zeros(), 0.1 * scale, 24, 48);
        let keep: Vec<bool> = s.vertices.iter().map(|v| v.y > -0.03 * scale).collect();
        s.submesh(&keep).0
    }

    fn params() -> RegistrationParams {
        RegistrationParams { stiffness_start: 10.0, stiffness_end: 0.5, levels: 6, iterations: 6, max_residual: 0.01 }
    }

    #[test]
    fn identity_registration() {
        let m = cap(1.0);
        let r = register_mesh(&m, &m, &params()).unwrap();
        for (p, v) in r.positions.iter().zip(&m.vertices) {
            assert!((p - v).norm() < 1e-6);
        }
        assert!(r.residual < 1e-6);
    }

    #[test]
    fn scaled_target() {
        let m = cap(1.0);
        let t = cap(1.1);
        let r = register_mesh(&m, &t, &params()).unwrap();
        assert!(r.residual < 1e-3, "{}", r.residual);
    }
}
