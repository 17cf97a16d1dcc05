//! Strand coloring, projection IOU, recoloring, morphing and distances
//! between strand sets.

use log::warn;
use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Bvh, KdTree, TriangleMesh};
use crate::render::{draw_polyline, project_polyline};
use crate::scene::{Camera, CameraFrame, Raster, Strand, StrandSet, FACE};
use crate::Vec3;

/// Colors every strand vertex with the mean color of the frames in which it
/// passes the depth test (`|z - depth| <= tolerance`). Vertices seen nowhere
/// get the mean of the seen ones; if nothing is seen everything is mid-gray.
/// Frames without a color layer are ignored, and without any color layer
/// the strands come back uncolored.
pub fn strand_colors(strands: &StrandSet, frames: &[CameraFrame], tolerance: f64) -> StrandSet {
    let colored: Vec<&CameraFrame> = frames.iter().filter(|f| f.color.is_some()).collect();
    if colored.is_empty() {
        warn!("no frame has a color layer; strands left uncolored");
        return StrandSet::new(
            strands.strands.iter().map(|s| s.clone().without_colors()).collect(),
            strands.source_tag.clone(),
        );
    }
    let per_vertex: Vec<Vec<Option<[f64; 3]>>> = strands
        .strands
        .par_iter()
        .map(|s| s.vertices().iter().map(|p| sample_color(p, &colored, tolerance)).collect())
        .collect();
    let seen: Vec<[f64; 3]> = per_vertex.iter().flatten().flatten().copied().collect();
    let fallback = if seen.is_empty() {
        warn!("no strand vertex is visible in any frame; using mid-gray");
        [0.5; 3]
    } else {
        let mut m = [0.0; 3];
        for c in &seen {
            for k in 0..3 {
                m[k] += c[k];
            }
        }
        m.map(|v| v / seen.len() as f64)
    };
    let out = strands
        .strands
        .iter()
        .zip(per_vertex)
        .map(|(s, cols)| {
            let cols = cols.into_iter().map(|c| c.unwrap_or(fallback)).collect();
            s.clone().with_colors(cols).expect("one color per vertex")
        })
        .collect();
    StrandSet::new(out, strands.source_tag.clone())
}

fn sample_color(p: &Vec3, frames: &[&CameraFrame], tolerance: f64) -> Option<[f64; 3]> {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for f in frames {
        let Some((px, z)) = f.project(p) else { continue };
        let Some((x, y)) = f.mask.nearest_pixel(px.x, px.y) else {
            continue;
        };
        let d = *f.depth.get(x, y) as f64;
        if d <= 0.0 || (z - d).abs() > tolerance {
            continue;
        }
        let c = f.color.as_ref().expect("filtered on color").get(x, y);
        for k in 0..3 {
            sum[k] += c[k] as f64 / 255.0;
        }
        n += 1;
    }
    (n > 0).then(|| sum.map(|v| v / n as f64))
}

/// Depth test used when projecting strands: a point is hidden when it lies
/// more than `tolerance` behind the rendered depth at its pixel.
#[derive(Debug, Clone, Copy)]
pub struct Occlusion<'a> {
    pub depth: &'a Raster<f32>,
    pub tolerance: f64,
}

/// Rasterizes the strands as polylines of `line_width` pixels. With an
/// occlusion test, segments are cut into half-pixel pieces and only the
/// pieces in front of the depth layer are drawn.
pub fn project_strands(
    strands: &StrandSet,
    camera: &Camera,
    size: (usize, usize),
    line_width: f64,
    occlusion: Option<Occlusion>,
) -> Raster<bool> {
    let mut out = Raster::filled(size.0, size.1, false);
    for s in &strands.strands {
        for run in project_polyline(camera, s.vertices()) {
            match occlusion {
                None => {
                    let pts: Vec<Vector2<f64>> = run.iter().map(|q| q.0).collect();
                    draw_polyline(&mut out, &pts, line_width);
                }
                Some(o) => {
                    for seg in run.windows(2) {
                        draw_visible(&mut out, seg[0], seg[1], line_width, &o);
                    }
                }
            }
        }
    }
    out
}

fn draw_visible(out: &mut Raster<bool>, a: (Vector2<f64>, f64), b: (Vector2<f64>, f64), width: f64, o: &Occlusion) {
    let pieces = ((b.0 - a.0).norm() * 2.0).ceil().max(1.0) as usize;
    let at = |t: f64| (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
    for i in 0..pieces {
        let (t0, t1) = (i as f64 / pieces as f64, (i + 1) as f64 / pieces as f64);
        let (m, z) = at(0.5 * (t0 + t1));
        let visible = match o.depth.nearest_pixel(m.x, m.y) {
            Some((x, y)) => {
                let d = *o.depth.get(x, y) as f64;
                d <= 0.0 || z <= d + o.tolerance
            }
            None => true,
        };
        if visible {
            draw_polyline(out, &[at(t0).0, at(t1).0], width);
        }
    }
}

/// `|a & b| / |a | b|`, with two empty rasters counting as a perfect match.
pub fn iou(a: &Raster<bool>, b: &Raster<bool>) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::Argument("IOU of rasters with different sizes".into()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.data.iter().zip(&b.data) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// IOU between the projected strands and a ground-truth hair mask.
pub fn evaluate_iou(
    strands: &StrandSet,
    frame: &CameraFrame,
    gt: &Raster<bool>,
    line_width: f64,
    occlusion: Option<f64>,
) -> Result<f64> {
    let occ = occlusion.map(|tolerance| Occlusion { depth: &frame.depth, tolerance });
    let proj = project_strands(strands, &frame.camera, (gt.width, gt.height), line_width, occ);
    iou(&proj, gt)
}

/// Multiplies every color channel by `factor` and clamps to `[0, 1]`.
pub fn recolor(strands: &StrandSet, factor: f64) -> Result<StrandSet> {
    if !(factor > 0.0) {
        return Err(Error::Argument(format!("recolor factor must be positive, got {factor}")));
    }
    let out = strands
        .strands
        .iter()
        .map(|s| match s.colors() {
            Some(c) => {
                let c = c.iter().map(|c| c.map(|v| (v * factor).clamp(0.0, 1.0))).collect();
                s.clone().with_colors(c).expect("same length")
            }
            None => s.clone(),
        })
        .collect();
    Ok(StrandSet::new(out, strands.source_tag.clone()))
}

/// Vertexwise interpolation `(1 - t) a + t b` of strands paired by root.
/// When `head` has a `face` channel, an interpolated strand is cut before
/// its first vertex inside the head near a face vertex; cut strands with
/// fewer than two vertices are dropped.
pub fn morph(a: &StrandSet, b: &StrandSet, t: f64, head: Option<&TriangleMesh>) -> Result<StrandSet> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Argument(format!("morph parameter {t} outside [0, 1]")));
    }
    if a.len() != b.len() {
        return Err(Error::Correspondence(format!("{} strands vs {}", a.len(), b.len())));
    }
    let roots = KdTree::new(b.strands.iter().map(|s| *s.root()).collect());
    let mut used = vec![false; b.len()];
    let mut pairs = Vec::with_capacity(a.len());
    for (i, s) in a.strands.iter().enumerate() {
        let (j, d2) = roots.nearest(s.root()).expect("non-empty");
        if d2 > 1e-12 || used[j] {
            return Err(Error::Correspondence(format!("strand {i} has no partner with the same root")));
        }
        if b.strands[j].len() != s.len() {
            return Err(Error::Correspondence(format!(
                "strand {i} has {} vertices, its partner {}",
                s.len(),
                b.strands[j].len()
            )));
        }
        used[j] = true;
        pairs.push((s, &b.strands[j]));
    }
    let face = head.and_then(FaceRegion::new);
    let out = pairs
        .par_iter()
        .filter_map(|(sa, sb)| {
            let mut pts: Vec<Vec3> =
                sa.vertices().iter().zip(sb.vertices()).map(|(p, q)| p * (1.0 - t) + q * t).collect();
            if let Some(f) = &face {
                if let Some(cut) = pts.iter().position(|p| f.contains(p)) {
                    pts.truncate(cut);
                }
            }
            let s = Strand::from_points_dedup(pts)?;
            match (sa.colors(), sb.colors()) {
                (Some(ca), Some(cb)) if s.len() <= ca.len() => {
                    let c = ca
                        .iter()
                        .zip(cb)
                        .take(s.len())
                        .map(|(x, y)| [0, 1, 2].map(|k| x[k] * (1.0 - t) + y[k] * t))
                        .collect();
                    s.with_colors(c).ok()
                }
                _ => Some(s),
            }
        })
        .collect();
    Ok(StrandSet::new(out, "morph"))
}

struct FaceRegion {
    bvh: Bvh,
    face_tri: Vec<bool>,
}

impl FaceRegion {
    fn new(head: &TriangleMesh) -> Option<Self> {
        let flags = head.flag(FACE)?;
        if !flags.iter().any(|&f| f) {
            return None;
        }
        let face_tri = head.faces.iter().map(|f| f.iter().any(|&i| flags[i as usize])).collect();
        Some(FaceRegion { bvh: Bvh::new(head), face_tri })
    }

    fn contains(&self, p: &Vec3) -> bool {
        self.bvh.contains(p) && self.bvh.closest_point(p).is_some_and(|h| self.face_tri[h.triangle])
    }
}

/// Mean distance from the vertices of `from` to the polylines of `to`,
/// with `to` resampled at `spacing` and matched vertex to vertex.
pub fn mean_closest_distance(from: &StrandSet, to: &StrandSet, spacing: f64) -> f64 {
    let dense: Vec<Vec3> = to
        .strands
        .iter()
        .flat_map(|s| {
            let n = ((s.length() / spacing).ceil() as usize + 1).max(2);
            crate::deform::resample_points(s.vertices(), n).unwrap_or_else(|_| s.vertices().to_vec())
        })
        .collect();
    let tree = KdTree::new(dense);
    let pts: Vec<&Vec3> = from.points().collect();
    if pts.is_empty() || tree.is_empty() {
        return f64::INFINITY;
    }
    let sum: f64 = pts.par_iter().map(|p| tree.nearest(p).map_or(0.0, |(_, d2)| d2.sqrt())).sum();
    sum / pts.len() as f64
}

/// Symmetric version: the larger of the two directed mean distances.
pub fn strand_set_gap(a: &StrandSet, b: &StrandSet, spacing: f64) -> f64 {
    mean_closest_distance(a, b, spacing).max(mean_closest_distance(b, a, spacing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::uv_sphere;
    use crate::scene::Intrinsics;

    fn line(x: f64, y0: f64) -> Strand {
        Strand::new((0..10).map(|i| Vec3::new(x, y0 - 0.01 * i as f64, 0.0)).collect()).unwrap()
    }

    fn camera() -> Camera {
        let k = Intrinsics { fx: 300.0, fy: 300.0, cx: 31.5, cy: 31.5 };
        Camera::look_at(k, Vec3::new(0.0, 0.0, 1.0), Vec3::zeros())
    }

    #[test]
    fn iou_edge_cases() {
        let e = Raster::filled(4, 4, false);
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        let mut a = e.clone();
        a.set(0, 0, true);
        assert_eq!(iou(&e, &a).unwrap(), 0.0);
        let mut b = e.clone();
        b.set(3, 3, true);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn self_projection_iou() {
        let set = StrandSet::new((0..5).map(|i| line(-0.04 + 0.02 * i as f64, 0.05)).collect(), "t");
        let cam = camera();
        let gt = project_strands(&set, &cam, (64, 64), 2.0, None);
        let proj = project_strands(&set, &cam, (64, 64), 2.0, None);
        assert!(iou(&proj, &gt).unwrap() >= 0.95);
    }

    #[test]
    fn recolor_arithmetic() {
        let s = line(0.0, 0.0).with_colors(vec![[0.8, 0.6, 0.4]; 10]).unwrap();
        let set = StrandSet::new(vec![s], "t");
        let half = recolor(&set, 0.5).unwrap();
        let c = half.strands[0].colors().unwrap()[0];
        assert!((c[0] - 0.4).abs() < 1e-15 && (c[1] - 0.3).abs() < 1e-15 && (c[2] - 0.2).abs() < 1e-15);
        let dbl = recolor(&set, 2.0).unwrap();
        assert_eq!(dbl.strands[0].colors().unwrap()[0], [1.0, 1.0, 0.8]);
        assert_eq!(recolor(&set, 1.0).unwrap(), set);
        assert!(recolor(&set, 0.0).is_err());
    }

    #[test]
    fn morph_endpoints_and_midpoint() {
        let a = StrandSet::new(vec![line(0.0, 0.0), line(0.1, 0.0)], "a");
        let b = StrandSet::new(
            a.strands
                .iter()
                .rev()
                .map(|s| {
                    let r = *s.root();
                    s.map_points(|p| if *p == r { *p } else { p + Vec3::new(0.0, 0.0, 0.02) }).unwrap()
                })
                .collect(),
            "b",
        );
        let m0 = morph(&a, &b, 0.0, None).unwrap();
        assert_eq!(m0.strands, a.strands);
        let m1 = morph(&a, &b, 1.0, None).unwrap();
        assert_eq!(m1.strands[0], b.strands[1]);
        let m = morph(&a, &b, 0.5, None).unwrap();
        assert!((m.strands[0].vertices()[5].z - 0.01).abs() < 1e-12);
        let c = StrandSet::new(vec![line(0.0, 0.0), line(0.3, 0.0)], "c");
        assert!(matches!(morph(&a, &c, 0.5, None), Err(Error::Correspondence(_))));
    }

    #[test]
    fn morph_trims_at_face() {
        let mut head = uv_sphere(Vec3::new(0.0, -0.05, 0.0), 0.02, 12, 24);
        let n = head.vertices.len();
        head.set_flag(FACE, vec![true; n]);
        let a = StrandSet::new(vec![line(-0.05, 0.0)], "a");
        let b = StrandSet::new(
            vec![a.strands[0].map_points(|p| Vec3::new(p.x + 0.1 * (p.y / -0.09), p.y, p.z)).unwrap()],
            "b",
        );
        let m = morph(&a, &b, 0.5, Some(&head)).unwrap();
        let bvh = Bvh::new(&head);
        assert!(m.strands[0].len() < 10);
        for p in m.strands[0].vertices() {
            assert!(!bvh.contains(p));
        }
    }

    #[test]
    fn uniform_frames_give_uniform_color() {
        let cam = camera();
        let mk = |id| {
            CameraFrame::new(
                id,
                cam.clone(),
                Raster::filled(64, 64, true),
                Raster::filled(64, 64, 1.0),
                Raster::filled(64, 64, 1),
                Raster::filled(64, 64, 1.0),
                Some(Raster::filled(64, 64, [255, 0, 0])),
            )
            .unwrap()
        };
        let set = StrandSet::new(vec![line(0.0, 0.03), line(0.0, 5.0)], "t");
        let out = strand_colors(&set, &[mk(0), mk(1)], 0.01);
        for s in &out.strands {
            for c in s.colors().unwrap() {
                assert_eq!(*c, [1.0, 0.0, 0.0]);
            }
        }
    }
}
