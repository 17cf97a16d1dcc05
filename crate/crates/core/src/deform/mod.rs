//! Deformation of retrieved hairstyles onto the hull and local refinement
//! through a diffused orientation field.

mod blend;
mod correct;
mod field;
mod register;
mod regrow;

pub use blend::{blend_transform, deform_hairstyle, BlendParams, Blender};
pub use correct::{correction_energy, solve_correction, uniform_laplacian, view_correct, AnchorTransforms};
pub use field::{build_orientation_field, FieldParams, OrientationField};
pub use register::{register_mesh, Registration, RegistrationParams};
pub use regrow::{regrow_strands, RegrowParams, Regrown};

use crate::database::StrandIndex;
use crate::error::{Error, Result};
use crate::scene::{Strand, StrandSet};
use crate::Vec3;

/// Arc-length uniform resampling of a polyline to exactly `n` points; the
/// endpoints are kept.
pub fn resample_points(points: &[Vec3], n: usize) -> Result<Vec<Vec3>> {
    if n < 2 {
        return Err(Error::Argument(format!("resampling needs at least 2 vertices, got {n}")));
    }
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        acc += (w[1] - w[0]).norm();
        cum.push(acc);
    }
    if points.len() < 2 || acc <= 0.0 {
        return Err(Error::DegenerateGeometry("cannot resample a zero-length strand".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        if k == n - 1 {
            out.push(points[points.len() - 1]);
            break;
        }
        let s = acc * k as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * t);
    }
    Ok(out)
}

pub fn resample_strand(strand: &Strand, n: usize) -> Result<Strand> {
    Strand::new(resample_points(strand.vertices(), n)?)
}

/// Resamples every strand to `n` vertices, keeping colors out of it.
pub fn resample_set(set: &StrandSet, n: usize) -> Result<StrandSet> {
    let strands = set.strands.iter().map(|s| resample_strand(s, n)).collect::<Result<Vec<_>>>()?;
    Ok(StrandSet::new(strands, set.source_tag.clone()))
}

/// Picks the deformed candidate closest to the query strands; ties go to the
/// smaller id. Returns `(index, distance)`.
pub fn final_select(candidates: &[(String, StrandSet)], query: &StrandSet) -> Option<(usize, f64)> {
    let scored: Vec<(usize, f64)> =
        candidates.iter().enumerate().map(|(i, (_, set))| (i, StrandIndex::new(set).distance(query))).collect();
    scored.into_iter().min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| candidates[a.0].0.cmp(&candidates[b.0].0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_straight_line() {
        let pts = vec![Vec3::zeros(), Vec3::new(0.3, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let r = resample_points(&pts, 50).unwrap();
        assert_eq!(r.len(), 50);
        for (k, p) in r.iter().enumerate() {
            assert!((p.x - k as f64 / 49.0).abs() < 1e-12);
            assert_eq!(p.y, 0.0);
        }
        let two = resample_points(&pts, 2).unwrap();
        assert_eq!(two, vec![pts[0], pts[2]]);
        assert!(resample_points(&[Vec3::zeros(), Vec3::zeros()], 5).is_err());
        assert!(resample_points(&pts, 1).is_err());
    }

    #[test]
    fn resample_refinement_consistency() {
        let pts: Vec<Vec3> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.1;
                Vec3::new(t.cos(), t.sin(), 0.2 * t)
            })
            .collect();
        let direct = resample_points(&pts, 50).unwrap();
        let fine = resample_points(&pts, 200).unwrap();
        let twice = resample_points(&fine, 50).unwrap();
        let h = 0.1 * 1.02;
        for (a, b) in direct.iter().zip(&twice) {
            assert!((a - b).norm() < h);
        }
    }

    #[test]
    fn final_select_prefers_exact_copy_then_id() {
        let s = |x: f64| {
            StrandSet::new(vec![Strand::new(vec![Vec3::new(x, 0.0, 0.0), Vec3::new(x, -0.1, 0.0)]).unwrap()], "t")
        };
        let cands = vec![("b".to_string(), s(0.1)), ("c".to_string(), s(0.3)), ("a".to_string(), s(0.1))];
        assert_eq!(final_select(&cands, &s(0.3)).unwrap().0, 1);
        assert_eq!(final_select(&cands, &s(0.1)).unwrap().0, 2);
        assert_eq!(final_select(&cands[..1], &s(5.0)).unwrap().0, 0);
    }
}
