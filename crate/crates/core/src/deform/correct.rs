//! View-confidence correction of a registered rough mesh and per-vertex
//! affine anchor transforms.

use nalgebra::{Matrix3, Matrix3x4};

use crate::error::{Error, Result};
use crate::geom::TriangleMesh;
use crate::hull::{point_azimuth, ConfidenceRegion};
use crate::linalg::{CsrMatrix, EnvelopeCholesky};
use crate::Vec3;

/// Per-vertex anchors of a corrected rough mesh.
#[derive(Debug, Clone)]
pub struct AnchorTransforms {
    /// `v_i`, the rough mesh before deformation.
    pub original: Vec<Vec3>,
    /// `v_i'`, after registration and correction.
    pub deformed: Vec<Vec3>,
    /// `T_i` mapping `[v; 1]` to the deformed position.
    pub transforms: Vec<Matrix3x4<f64>>,
    pub confidence: Vec<f64>,
}

impl AnchorTransforms {
    /// Anchors that leave everything where it is.
    pub fn identity(points: Vec<Vec3>) -> Self {
        let n = points.len();
        AnchorTransforms {
            deformed: points.clone(),
            original: points,
            transforms: vec![Matrix3x4::identity(); n],
            confidence: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }
}

/// Uniform graph Laplacian: `(L v)_i = v_i - mean(v_j for j in N(i))`.
pub fn uniform_laplacian(nbrs: &[Vec<usize>]) -> CsrMatrix {
    let mut trip = Vec::new();
    for (i, ns) in nbrs.iter().enumerate() {
        if ns.is_empty() {
            continue;
        }
        trip.push((i, i, 1.0));
        let w = 1.0 / ns.len() as f64;
        for &j in ns {
            trip.push((i, j, -w));
        }
    }
    CsrMatrix::from_triplets(nbrs.len(), trip)
}

/// `sum (1 - c_i) |L v'_i - L v_i|^2 + lambda sum c_i |v'_i - x_i|^2`.
pub fn correction_energy(
    mesh: &TriangleMesh,
    deformed: &[Vec3],
    targets: &[Vec3],
    confidence: &[f64],
    lambda: f64,
) -> f64 {
    let l = uniform_laplacian(&mesh.vertex_neighbors());
    let d: Vec<Vec3> = deformed.iter().zip(&mesh.vertices).map(|(a, b)| a - b).collect();
    let mut e = 0.0;
    for i in 0..d.len() {
        let ld = l.row(i).fold(Vec3::zeros(), |acc, (j, w)| acc + d[j] * w);
        e += (1.0 - confidence[i]) * ld.norm_squared();
        e += lambda * confidence[i] * (deformed[i] - targets[i]).norm_squared();
    }
    e
}

/// Corrects the registered targets `x_i` of `mesh` in the low-confidence
/// region. Confidence comes from the azimuth of each target about the
/// vertical axis through `center`; partially confident vertices keep a data
/// term weighted by `lambda * c_i`. Returns the anchors with fitted `T_i`.
pub fn view_correct(
    mesh: &TriangleMesh,
    targets: &[Vec3],
    region: &ConfidenceRegion,
    center: &Vec3,
    lambda: f64,
    sigma: f64,
) -> Result<AnchorTransforms> {
    let confidence: Vec<f64> = targets.iter().map(|x| region.confidence(point_azimuth(x, center), sigma)).collect();
    let deformed = solve_correction(mesh, targets, &confidence, lambda)?;
    let transforms = fit_transforms(mesh, &deformed);
    Ok(AnchorTransforms { original: mesh.vertices.clone(), deformed, transforms, confidence })
}

/// Minimizes the correction energy for given confidences. Solved in
/// displacement form `(L^T D L + lambda C) d = lambda C (x - v)`.
pub fn solve_correction(mesh: &TriangleMesh, targets: &[Vec3], confidence: &[f64], lambda: f64) -> Result<Vec<Vec3>> {
    let n = mesh.vertices.len();
    if targets.len() != n || confidence.len() != n {
        return Err(Error::Argument(format!(
            "{n} vertices but {} targets and {} confidences",
            targets.len(),
            confidence.len()
        )));
    }
    if lambda <= 0.0 {
        return Err(Error::Argument("correction weight must be positive".into()));
    }
    let (label, count) = mesh.connected_components();
    let mut anchored = vec![false; count];
    for i in 0..n {
        if confidence[i] >= 1.0 {
            anchored[label[i]] = true;
        }
    }
    if let Some(component) = anchored.iter().position(|a| !a) {
        return Err(Error::SingularSystem { component });
    }
    let l = uniform_laplacian(&mesh.vertex_neighbors());
    let dw: Vec<f64> = confidence.iter().map(|c| 1.0 - c).collect();
    let cw: Vec<f64> = confidence.iter().map(|c| lambda * c).collect();
    let a = l.gram_weighted(&dw).add_diagonal(&cw);
    let chol = EnvelopeCholesky::factor(&a)?;
    let mut cols = Vec::with_capacity(3);
    for k in 0..3 {
        let b: Vec<f64> = (0..n).map(|i| cw[i] * (targets[i][k] - mesh.vertices[i][k])).collect();
        let (x, rel) = chol.solve_refined(&a, &b, 3);
        if rel > 1e-10 {
            return Err(Error::Convergence { residual: rel, tolerance: 1e-10 });
        }
        cols.push(x);
    }
    Ok((0..n).map(|i| mesh.vertices[i] + Vec3::new(cols[0][i], cols[1][i], cols[2][i])).collect())
}

/// Least-squares affine map of each 1-ring, regularized towards the
/// identity; rings with fewer than 4 neighbors get a pure translation.
fn fit_transforms(mesh: &TriangleMesh, deformed: &[Vec3]) -> Vec<Matrix3x4<f64>> {
    let nbrs = mesh.vertex_neighbors();
    (0..mesh.vertices.len())
        .map(|i| {
            let v = mesh.vertices[i];
            let vp = deformed[i];
            let mut a = Matrix3::identity();
            if nbrs[i].len() >= 4 {
                let mut s = Matrix3::zeros();
                let mut sp = Matrix3::zeros();
                let mut mean2 = 0.0;
                for &j in &nbrs[i] {
                    let e = mesh.vertices[j] - v;
                    let ep = deformed[j] - vp;
                    s += e * e.transpose();
                    sp += ep * e.transpose();
                    mean2 += e.norm_squared();
                }
                let mu = 1e-2 * mean2 / nbrs[i].len() as f64;
                let id = Matrix3::identity() * mu;
                if let Some(inv) = (s + id).try_inverse() {
                    a = (sp + id) * inv;
                }
            }
            let t = vp - a * v;
            let mut m = Matrix3x4::zeros();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
            m.set_column(3, &t);
            m
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::uv_sphere;
    use std::f64::consts::PI;

    fn sphere() -> TriangleMesh {
        uv_sphere(Vec3::zeros(), 0.1, 12, 24)
    }

    #[test]
    fn full_confidence_reproduces_targets() {
        let m = sphere();
        let x: Vec<Vec3> = m.vertices.iter().map(|v| v * 1.2 + Vec3::new(0.0, 0.01, 0.0)).collect();
        let c = vec![1.0; m.vertices.len()];
        let d = solve_correction(&m, &x, &c, 1e-5).unwrap();
        for (a, b) in d.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn unchanged_targets_are_a_zero_energy_solution() {
        let m = sphere();
        let mut c = vec![0.0; m.vertices.len()];
        c[0] = 1.0;
        let d = solve_correction(&m, &m.vertices, &c, 1e-5).unwrap();
        for (a, b) in d.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(correction_energy(&m, &d, &m.vertices, &c, 1e-5) < 1e-20);
    }

    #[test]
    fn unanchored_component_is_singular() {
        let a = uv_sphere(Vec3::zeros(), 0.1, 6, 8);
        let b = uv_sphere(Vec3::new(1.0, 0.0, 0.0), 0.1, 6, 8);
        let off = a.vertices.len() as u32;
        let mut verts = a.vertices.clone();
        verts.extend(&b.vertices);
        let mut faces = a.faces.clone();
        faces.extend(b.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        let m = TriangleMesh::new(verts, faces).unwrap();
        let mut c = vec![0.5; m.vertices.len()];
        c[0] = 1.0;
        match solve_correction(&m, &m.vertices, &c, 1e-5) {
            Err(Error::SingularSystem { component }) => assert_eq!(component, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transforms_reproduce_rigid_motion() {
        let m = sphere();
        let rot = nalgebra::Rotation3::from_euler_angles(0.1, 0.4, -0.2);
        let t = Vec3::new(0.01, -0.02, 0.03);
        let x: Vec<Vec3> = m.vertices.iter().map(|v| rot * v + t).collect();
        let region = ConfidenceRegion::from_azimuths(&[-PI / 2.0, PI / 2.0]).unwrap();
        let a = view_correct(&m, &x, &region, &Vec3::zeros(), 1e-5, PI / 18.0).unwrap();
        for i in 0..m.vertices.len() {
            let h = a.original[i].push(1.0);
            assert!((a.transforms[i] * h - a.deformed[i]).norm() < 1e-12);
        }
    }
}
