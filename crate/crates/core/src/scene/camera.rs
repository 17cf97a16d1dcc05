use nalgebra::{Matrix3, Vector2};

use super::raster::Raster;
use crate::error::{Error, Result};
use crate::Vec3;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Calibrated perspective camera. World points map to camera space by
/// `x_cam = rotation * x_world + translation`; the camera looks down +z with
/// image x to the right and image y down.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Camera { intrinsics, rotation, translation }
    }

    /// Camera at `eye` looking at `target`, with world +y as up.
    pub fn look_at(intrinsics: Intrinsics, eye: Vec3, target: Vec3) -> Self {
        let forward = (target - eye).normalize();
        let up = Vec3::new(0.0, 1.0, 0.0);
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Camera::new(intrinsics, rotation, translation)
    }

    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Perspective projection. Returns `None` when the point is not in front
    /// of the camera (camera-space depth <= 0) or not finite.
    pub fn project(&self, p: &Vec3) -> Option<(Vector2<f64>, f64)> {
        let c = self.to_camera(p);
        if !(c.z > 0.0) || !c.iter().all(|v| v.is_finite()) {
            return None;
        }
        let k = &self.intrinsics;
        Some((Vector2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy), c.z))
    }

    /// Inverse of [`Camera::project`] for a known camera-space depth.
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::Argument(format!("unproject needs a positive depth, got {depth}")));
        }
        let k = &self.intrinsics;
        let c = Vec3::new((pixel.x - k.cx) / k.fx * depth, (pixel.y - k.cy) / k.fy * depth, depth);
        Ok(self.rotation.transpose() * (c - self.translation))
    }

    /// Azimuth of the camera center about the vertical (y) axis through
    /// `origin`, in `(-pi, pi]`, zero towards +z and `pi/2` towards +x.
    pub fn azimuth(&self, origin: &Vec3) -> Result<f64> {
        let d = self.center() - origin;
        if d.x.hypot(d.z) < 1e-12 {
            return Err(Error::DegenerateGeometry("camera center lies on the vertical axis through the origin".into()));
        }
        Ok(azimuth_of(d.x, d.z))
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let e = self.rotation * self.rotation.transpose() - Matrix3::identity();
        e.iter().all(|v| v.abs() <= tol)
    }
}

/// `atan2(x, z)` folded into `(-pi, pi]`.
pub fn azimuth_of(x: f64, z: f64) -> f64 {
    let a = x.atan2(z);
    if a <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = a % TAU;
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

/// One video frame: pose plus raster layers, all of identical size.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub frame_id: u32,
    pub camera: Camera,
    /// Camera azimuth about the origin, cached at construction.
    pub azimuth: f64,
    pub mask: Raster<bool>,
    pub hair_prob: Raster<f32>,
    /// Label codes, see [`super::raster::DirLabel`].
    pub dir_labels: Raster<u8>,
    /// Camera-space depth; 0 means no depth.
    pub depth: Raster<f32>,
    pub color: Option<Raster<[u8; 3]>>,
}

impl CameraFrame {
    pub fn new(
        frame_id: u32,
        camera: Camera,
        mask: Raster<bool>,
        hair_prob: Raster<f32>,
        dir_labels: Raster<u8>,
        depth: Raster<f32>,
        color: Option<Raster<[u8; 3]>>,
    ) -> Result<Self> {
        if !camera.is_orthonormal(1e-6) {
            return Err(Error::validation(Some(frame_id), "rotation is not orthonormal"));
        }
        let sizes_ok = mask.same_size(&hair_prob)
            && mask.same_size(&dir_labels)
            && mask.same_size(&depth)
            && color.as_ref().is_none_or(|c| mask.same_size(c));
        if !sizes_ok {
            return Err(Error::validation(Some(frame_id), "raster layers differ in size"));
        }
        if hair_prob.data.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation(Some(frame_id), "hair probability outside [0, 1]"));
        }
        if depth.data.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::validation(Some(frame_id), "depth must be positive or 0 (no depth)"));
        }
        if dir_labels.data.iter().any(|&l| l > 5) {
            return Err(Error::validation(Some(frame_id), "direction label code above 5"));
        }
        let azimuth = camera.azimuth(&Vec3::zeros()).map_err(|e| Error::validation(Some(frame_id), e.to_string()))?;
        Ok(CameraFrame { frame_id, camera, azimuth, mask, hair_prob, dir_labels, depth, color })
    }

    pub fn width(&self) -> usize {
        self.mask.width
    }

    pub fn height(&self) -> usize {
        self.mask.height
    }

    pub fn project(&self, p: &Vec3) -> Option<(Vector2<f64>, f64)> {
        self.camera.project(p)
    }

    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vec3> {
        self.camera.unproject(pixel, depth)
    }

    /// Number of pixels with hair probability above one half.
    pub fn hair_area(&self) -> usize {
        self.hair_prob.data.iter().filter(|&&p| p > 0.5).count()
    }

    /// Depth at a continuous pixel position: bilinear when the four
    /// surrounding samples are valid, else the nearest valid sample.
    pub fn depth_at(&self, u: f64, v: f64) -> Option<f64> {
        let (w, h) = (self.width(), self.height());
        if !(u >= -0.5 && v >= -0.5 && u < w as f64 - 0.5 && v < h as f64 - 0.5) {
            return None;
        }
        let x0 = u.floor();
        let y0 = v.floor();
        if x0 >= 0.0 && y0 >= 0.0 && (x0 as usize) + 1 < w && (y0 as usize) + 1 < h {
            let (xi, yi) = (x0 as usize, y0 as usize);
            let s = [
                *self.depth.get(xi, yi),
                *self.depth.get(xi + 1, yi),
                *self.depth.get(xi, yi + 1),
                *self.depth.get(xi + 1, yi + 1),
            ];
            if s.iter().all(|&d| d > 0.0) {
                let fx = u - x0;
                let fy = v - y0;
                let top = s[0] as f64 * (1.0 - fx) + s[1] as f64 * fx;
                let bot = s[2] as f64 * (1.0 - fx) + s[3] as f64 * fx;
                return Some(top * (1.0 - fy) + bot * fy);
            }
        }
        let d = *self.depth.sample_nearest(u, v)?;
        (d > 0.0).then_some(d as f64)
    }
}
