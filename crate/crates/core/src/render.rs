//! Software z-buffer and polyline rasterization.

use nalgebra::Vector2;

use crate::geom::TriangleMesh;
use crate::scene::{Camera, Raster};
use crate::Vec3;

/// Sentinel for pixels no triangle covers.
pub const NO_TRIANGLE: u32 = u32::MAX;

/// Depth and triangle-id buffers of a mesh seen from a camera. Depth is the
/// camera-space z (0 where nothing is drawn).
#[derive(Debug, Clone)]
pub struct ZBuffer {
    pub depth: Raster<f32>,
    pub triangle: Raster<u32>,
}

impl ZBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ZBuffer { depth: Raster::filled(width, height, 0.0), triangle: Raster::filled(width, height, NO_TRIANGLE) }
    }

    /// Depth at `(x, y)` or `None` when empty.
    pub fn depth_at(&self, x: usize, y: usize) -> Option<f64> {
        let d = *self.depth.get(x, y);
        (d > 0.0).then_some(d as f64)
    }

    /// Draws every face of `mesh`; nearer fragments win. Triangles with a
    /// vertex behind the camera are skipped.
    pub fn draw_mesh(&mut self, mesh: &TriangleMesh, camera: &Camera) {
        let projected: Vec<Option<(Vector2<f64>, f64)>> = mesh.vertices.iter().map(|v| camera.project(v)).collect();
        for (f, face) in mesh.faces.iter().enumerate() {
            let p = [projected[face[0] as usize], projected[face[1] as usize], projected[face[2] as usize]];
            if let [Some(a), Some(b), Some(c)] = p {
                self.draw_triangle([a, b, c], f as u32);
            }
        }
    }

    /// Rasterizes one projected triangle covering pixel centers inside or on
    /// its edges; depth is interpolated perspective-correctly.
    pub fn draw_triangle(&mut self, v: [(Vector2<f64>, f64); 3], id: u32) {
        let (w, h) = (self.depth.width, self.depth.height);
        let [(a, za), (b, zb), (c, zc)] = v;
        let area = edge(&a, &b, &c);
        if area.abs() < 1e-12 {
            return;
        }
        let xmin = a.x.min(b.x).min(c.x).ceil().max(0.0);
        let xmax = a.x.max(b.x).max(c.x).floor().min(w as f64 - 1.0);
        let ymin = a.y.min(b.y).min(c.y).ceil().max(0.0);
        let ymax = a.y.max(b.y).max(c.y).floor().min(h as f64 - 1.0);
        if xmin > xmax || ymin > ymax {
            return;
        }
        let eps = -1e-9 * area.abs();
        for y in ymin as usize..=ymax as usize {
            for x in xmin as usize..=xmax as usize {
                let p = Vector2::new(x as f64, y as f64);
                let w0 = edge(&b, &c, &p) / area;
                let w1 = edge(&c, &a, &p) / area;
                let w2 = edge(&a, &b, &p) / area;
                if w0 * area.abs() < eps || w1 * area.abs() < eps || w2 * area.abs() < eps {
                    continue;
                }
                let inv = w0 / za + w1 / zb + w2 / zc;
                let z = (1.0 / inv) as f32;
                let cur = self.depth.get_mut(x, y);
                if *cur == 0.0 || z < *cur {
                    *cur = z;
                    self.triangle.set(x, y, id);
                }
            }
        }
    }
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Renders the z-buffer of `mesh` from `camera`.
pub fn render_mesh(mesh: &TriangleMesh, camera: &Camera, width: usize, height: usize) -> ZBuffer {
    let mut zb = ZBuffer::new(width, height);
    zb.draw_mesh(mesh, camera);
    zb
}

/// Marks every pixel whose center lies within `width / 2` of a segment of
/// the polyline.
pub fn draw_polyline(target: &mut Raster<bool>, points: &[Vector2<f64>], width: f64) {
    let r = width / 2.0;
    let (w, h) = (target.width as f64, target.height as f64);
    let mut mark = |a: &Vector2<f64>, b: &Vector2<f64>| {
        let xmin = (a.x.min(b.x) - r).ceil().max(0.0);
        let xmax = (a.x.max(b.x) + r).floor().min(w - 1.0);
        let ymin = (a.y.min(b.y) - r).ceil().max(0.0);
        let ymax = (a.y.max(b.y) + r).floor().min(h - 1.0);
        if xmin > xmax || ymin > ymax {
            return;
        }
        let d = b - a;
        let len2 = d.norm_squared();
        for y in ymin as usize..=ymax as usize {
            for x in xmin as usize..=xmax as usize {
                let p = Vector2::new(x as f64, y as f64);
                let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                if (p - (a + d * t)).norm() <= r {
                    target.set(x, y, true);
                }
            }
        }
    };
    if points.len() == 1 {
        mark(&points[0], &points[0]);
    }
    for s in points.windows(2) {
        mark(&s[0], &s[1]);
    }
}

/// Projects a 3D polyline and splits it where vertices fall behind the camera.
pub fn project_polyline(camera: &Camera, points: &[Vec3]) -> Vec<Vec<(Vector2<f64>, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for p in points {
        match camera.project(p) {
            Some(q) => cur.push(q),
            None => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::uv_sphere;
    use crate::scene::Intrinsics;

    fn cam() -> Camera {
        let k = Intrinsics { fx: 200.0, fy: 200.0, cx: 64.0, cy: 64.0 };
        Camera::look_at(k, Vec3::new(0.0, 0.0, 1.0), Vec3::zeros())
    }

    #[test]
    fn sphere_silhouette_area_and_depth() {
        let r = 0.1;
        let mesh = uv_sphere(Vec3::zeros(), r, 60, 120);
        let zb = render_mesh(&mesh, &cam(), 128, 128);
        let covered = zb.depth.data.iter().filter(|&&d| d > 0.0).count() as f64;
        // silhouette of a sphere at distance D: radius f * r / sqrt(D^2 - r^2)
        let rr = 200.0 * r / (1.0f64 - r * r).sqrt();
        let expect = std::f64::consts::PI * rr * rr;
        assert!((covered - expect).abs() / expect < 0.03, "{covered} vs {expect}");
        let center = zb.depth_at(64, 64).unwrap();
        assert!((center - 0.9).abs() < 1e-3);
    }

    #[test]
    fn nearer_triangle_wins() {
        let mut zb = ZBuffer::new(10, 10);
        let tri = |z: f64| [(Vector2::new(0.0, 0.0), z), (Vector2::new(9.0, 0.0), z), (Vector2::new(0.0, 9.0), z)];
        zb.draw_triangle(tri(2.0), 0);
        zb.draw_triangle(tri(1.0), 1);
        zb.draw_triangle(tri(3.0), 2);
        assert_eq!(*zb.triangle.get(1, 1), 1);
        assert_eq!(zb.depth_at(1, 1), Some(1.0));
        assert_eq!(*zb.triangle.get(9, 9), NO_TRIANGLE);
    }

    #[test]
    fn polyline_width() {
        let mut r = Raster::filled(20, 20, false);
        draw_polyline(&mut r, &[Vector2::new(2.0, 10.0), Vector2::new(17.0, 10.0)], 2.0);
        assert!(*r.get(10, 10) && *r.get(10, 9) && *r.get(10, 11));
        assert!(!*r.get(10, 12) && !*r.get(0, 10));
        // 16 columns of 3 plus one cap pixel at each end
        assert_eq!(r.data.iter().filter(|&&b| b).count(), 16 * 3 + 2);
    }
}
