//! Silhouette visual hull, hair labeling and the azimuth confidence region.

use std::f64::consts::{PI, TAU};

use log::debug;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{TriangleMesh, VoxelGrid};
use crate::render::render_mesh;
use crate::scene::{azimuth_of, wrap_angle, CameraFrame};
use crate::Vec3;

pub const HAIR: &str = "hair";
pub const HIGH_CONFIDENCE: &str = "high_confidence";

/// Occupancy grid plus its extracted surface. After [`label_hull_hair`] and
/// [`flag_confidence`] the surface carries `hair` and `high_confidence`
/// flag channels.
#[derive(Debug, Clone)]
pub struct VisualHull {
    pub grid: VoxelGrid,
    pub surface: TriangleMesh,
    /// Surface vertices that no frame saw during hair labeling.
    pub unseen_vertices: usize,
}

impl VisualHull {
    /// The hair part `X_h` as a standalone mesh (flags carried over).
    pub fn hair_mesh(&self) -> TriangleMesh {
        match self.surface.flag(HAIR) {
            Some(f) => self.surface.submesh(f).0,
            None => TriangleMesh::default(),
        }
    }

    /// The complement of [`VisualHull::hair_mesh`].
    pub fn skin_mesh(&self) -> TriangleMesh {
        match self.surface.flag(HAIR) {
            Some(f) => {
                let keep: Vec<bool> = f.iter().map(|h| !h).collect();
                self.surface.submesh(&keep).0
            }
            None => self.surface.clone(),
        }
    }
}

/// Ids of frames whose hair area (pixels with `hair_prob > 0.5`) is at least
/// `ratio` times the mean hair area.
pub fn reject_blurred_frames(frames: &[CameraFrame], ratio: f64) -> Result<Vec<u32>> {
    if frames.is_empty() {
        return Err(Error::EmptyResult("no frames to filter".into()));
    }
    let areas: Vec<usize> = frames.iter().map(CameraFrame::hair_area).collect();
    let mean = areas.iter().sum::<usize>() as f64 / areas.len() as f64;
    if mean == 0.0 {
        return Err(Error::EmptyResult("every frame has zero hair area".into()));
    }
    let kept: Vec<u32> =
        frames.iter().zip(&areas).filter(|(_, &a)| a as f64 >= ratio * mean).map(|(f, _)| f.frame_id).collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult("all frames rejected as blurred".into()));
    }
    Ok(kept)
}

/// Empty cubic grid of `resolution^3` voxels whose side is `scale` times the
/// largest extent of the head mesh, centered on it.
pub fn hull_grid(head: &TriangleMesh, scale: f64, resolution: usize) -> VoxelGrid {
    VoxelGrid::covering(&head.bbox(), scale, resolution)
}

/// Carves `grid`: a voxel stays occupied iff its center falls inside the
/// mask of every frame that sees it inside the image.
pub fn carve(frames: &[CameraFrame], mut grid: VoxelGrid) -> Result<VisualHull> {
    if frames.is_empty() {
        return Err(Error::Argument("carving needs at least one frame".into()));
    }
    let occupied: Vec<bool> = (0..grid.occupied.len())
        .into_par_iter()
        .map(|idx| {
            let c = grid.center_of(idx);
            frames.iter().all(|f| match f.project(&c) {
                Some((px, _)) => f.mask.sample_nearest(px.x, px.y).copied().unwrap_or(true),
                None => true,
            })
        })
        .collect();
    grid.occupied = occupied;
    if grid.occupied_count() == 0 {
        return Err(Error::EmptyResult("visual hull is empty".into()));
    }
    let surface = grid.extract_surface();
    Ok(VisualHull { grid, surface, unseen_vertices: 0 })
}

/// Sets the `hair` flag on every hull surface vertex whose mean hair
/// probability over the frames that see it exceeds `threshold`. A vertex is
/// seen when it projects into the image no deeper than the hull's own
/// z-buffer plus one voxel.
pub fn label_hull_hair(hull: &mut VisualHull, frames: &[CameraFrame], threshold: f64) -> Result<()> {
    if hull.surface.vertices.is_empty() {
        return Err(Error::Argument("hull surface is empty".into()));
    }
    let tol = hull.grid.voxel;
    let n = hull.surface.vertices.len();
    let per_frame: Vec<Vec<Option<f64>>> = frames
        .par_iter()
        .map(|f| {
            let zb = render_mesh(&hull.surface, &f.camera, f.width(), f.height());
            hull.surface
                .vertices
                .iter()
                .map(|v| {
                    let (px, z) = f.project(v)?;
                    let (x, y) = f.mask.nearest_pixel(px.x, px.y)?;
                    if let Some(front) = zb.depth_at(x, y) {
                        if z > front + tol {
                            return None;
                        }
                    }
                    Some(*f.hair_prob.get(x, y) as f64)
                })
                .collect()
        })
        .collect();
    let mut flags = vec![false; n];
    let mut unseen = 0;
    for (i, flag) in flags.iter_mut().enumerate() {
        let (sum, count) = per_frame.iter().filter_map(|pf| pf[i]).fold((0.0, 0usize), |(s, c), p| (s + p, c + 1));
        if count == 0 {
            unseen += 1;
        } else {
            *flag = sum / count as f64 > threshold;
        }
    }
    debug!("hull labeling: {} hair vertices, {unseen} unseen", flags.iter().filter(|&&f| f).count());
    hull.surface.set_flag(HAIR, flags);
    hull.unseen_vertices = unseen;
    Ok(())
}

/// Valid azimuth range `[R1, R2] ∪ [R3, R4]` derived from the camera
/// azimuths. The raw bounds are kept unwrapped (`R1 <= R2 < R3 <= R4`,
/// `R3 = R1 + pi`); [`ConfidenceRegion::intervals`] gives them in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceRegion {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
}

impl ConfidenceRegion {
    pub fn from_azimuths(azimuths: &[f64]) -> Result<Self> {
        if azimuths.is_empty() {
            return Err(Error::Argument("confidence region needs at least one frame".into()));
        }
        let lo = azimuths.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = azimuths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(ConfidenceRegion { r1: lo - PI / 2.0, r2: hi - PI / 2.0, r3: lo + PI / 2.0, r4: hi + PI / 2.0 })
    }

    /// Angular extent of the camera azimuths.
    pub fn span(&self) -> f64 {
        self.r2 - self.r1
    }

    /// Covers every azimuth when the camera span reaches pi.
    pub fn is_full(&self) -> bool {
        self.r2 - self.r1 >= PI - 1e-12
    }

    /// The two intervals with endpoints wrapped into `(-pi, pi]`. An interval
    /// whose start exceeds its end wraps through pi.
    pub fn intervals(&self) -> [(f64, f64); 2] {
        let w = |a: f64| if (a - PI).abs() < 1e-12 { PI } else { wrap_angle(a) };
        let mut r1 = w(self.r1);
        if (self.r1 + PI).abs() < 1e-12 {
            r1 = -PI;
        }
        [(r1, w(self.r2)), (w(self.r3), w(self.r4))]
    }

    pub fn contains(&self, azimuth: f64) -> bool {
        if self.is_full() {
            return true;
        }
        let inside = |lo: f64, hi: f64| (azimuth - lo).rem_euclid(TAU) <= hi - lo + 1e-12;
        inside(self.r1, self.r2) || inside(self.r3, self.r4)
    }

    /// View-correction confidence: 1 inside the region, otherwise a Gaussian
    /// in the angular distance to the bound that owns the azimuth. The front
    /// gap `(R2, R3)` is split at 0 and the back gap `(R4, R1 + 2pi)` at pi
    /// when those lie inside the gap, else at the gap midpoint.
    pub fn confidence(&self, azimuth: f64, sigma: f64) -> f64 {
        if self.contains(azimuth) {
            return 1.0;
        }
        let gauss = |d: f64| (-d * d / (2.0 * sigma * sigma)).exp();
        let front = (self.r2, self.r3);
        let back = (self.r4, self.r1 + TAU);
        for (lo, hi, anchor) in [(front.0, front.1, 0.0), (back.0, back.1, PI)] {
            let off = (azimuth - lo).rem_euclid(TAU);
            if off < hi - lo {
                let a_off = (anchor - lo).rem_euclid(TAU);
                let split = if a_off > 0.0 && a_off < hi - lo { a_off } else { (hi - lo) / 2.0 };
                let d = if off <= split { off } else { hi - lo - off };
                return gauss(d);
            }
        }
        // only reachable through rounding at a bound
        1.0
    }
}

/// Confidence region of `frames` about the vertical axis through `origin`.
pub fn confidence_region(frames: &[CameraFrame]) -> Result<ConfidenceRegion> {
    let az: Vec<f64> = frames.iter().map(|f| f.azimuth).collect();
    ConfidenceRegion::from_azimuths(&az)
}

/// Azimuth of a point about the vertical axis through `center`.
pub fn point_azimuth(p: &Vec3, center: &Vec3) -> f64 {
    azimuth_of(p.x - center.x, p.z - center.z)
}

/// Sets the `high_confidence` flag channel of `mesh`.
pub fn flag_confidence(mesh: &mut TriangleMesh, region: &ConfidenceRegion, center: &Vec3) {
    let flags = mesh.vertices.iter().map(|v| region.contains(point_azimuth(v, center))).collect();
    mesh.set_flag(HIGH_CONFIDENCE, flags);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Camera, Intrinsics, Raster};

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn region_from_partial_sweep() {
        let r = ConfidenceRegion::from_azimuths(&[deg(-15.0), deg(30.0), deg(75.0)]).unwrap();
        let [(a, b), (c, d)] = r.intervals();
        for (got, want) in [(a, -105.0), (b, -15.0), (c, 75.0), (d, 165.0)] {
            assert!((got - deg(want)).abs() < 1e-12);
        }
        assert!(r.contains(deg(-60.0)) && r.contains(deg(120.0)));
        assert!(!r.contains(deg(0.0)) && !r.contains(deg(180.0)) && !r.contains(deg(-150.0)));
    }

    #[test]
    fn region_full_and_degenerate() {
        let full = ConfidenceRegion::from_azimuths(&[deg(-90.0), deg(90.0)]).unwrap();
        assert!(full.is_full());
        let [(a, b), (c, d)] = full.intervals();
        assert!((a + PI).abs() < 1e-12 && b.abs() < 1e-12 && c.abs() < 1e-12 && (d - PI).abs() < 1e-12);
        let one = ConfidenceRegion::from_azimuths(&[0.0]).unwrap();
        assert!(one.contains(PI / 2.0) && one.contains(-PI / 2.0));
        assert!(!one.contains(PI / 2.0 + 1e-3) && !one.contains(0.3));
    }

    #[test]
    fn confidence_gaussian_owner() {
        let s = PI / 18.0;
        let r = ConfidenceRegion::from_azimuths(&[deg(-15.0), deg(75.0)]).unwrap();
        // front gap (-15, 75) owns 0: azimuth 10 deg belongs to R3 side
        let c = r.confidence(deg(10.0), s);
        let want = (-(deg(65.0)).powi(2) / (2.0 * s * s)).exp();
        assert!((c - want).abs() < 1e-12);
        let c = r.confidence(deg(-10.0), s);
        let want = (-(deg(5.0)).powi(2) / (2.0 * s * s)).exp();
        assert!((c - want).abs() < 1e-12);
        // back gap (165, 255) split at 180
        let c = r.confidence(deg(170.0), s);
        assert!((c - (-(deg(5.0)).powi(2) / (2.0 * s * s)).exp()).abs() < 1e-12);
        let c = r.confidence(deg(-110.0), s);
        assert!((c - (-(deg(5.0)).powi(2) / (2.0 * s * s)).exp()).abs() < 1e-12);
        assert_eq!(r.confidence(deg(100.0), s), 1.0);
    }

    #[test]
    fn blur_rejection_arithmetic() {
        let mk = |id: u32, area: usize| {
            let k = Intrinsics { fx: 10.0, fy: 10.0, cx: 10.0, cy: 5.0 };
            let cam = Camera::look_at(k, Vec3::new(0.0, 0.0, 5.0), Vec3::zeros());
            let prob = Raster::from_fn(20, 10, |x, y| if y * 20 + x < area { 1.0 } else { 0.0 });
            CameraFrame::new(
                id,
                cam,
                Raster::filled(20, 10, true),
                prob,
                Raster::filled(20, 10, 0),
                Raster::filled(20, 10, 1.0),
                None,
            )
            .unwrap()
        };
        let frames: Vec<_> = [100, 100, 100, 10].iter().enumerate().map(|(i, &a)| mk(i as u32, a.min(200))).collect();
        // mean 77.5; 0.33 * 77.5 = 25.575 > 10
        assert_eq!(reject_blurred_frames(&frames, 0.33).unwrap(), vec![0, 1, 2]);
        let zero: Vec<_> = (0..3).map(|i| mk(i, 0)).collect();
        assert!(matches!(reject_blurred_frames(&zero, 0.33), Err(Error::EmptyResult(_))));
    }
}
