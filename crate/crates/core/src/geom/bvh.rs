//! Bounding-volume hierarchy over the triangles of a mesh.
//!
//! Supports closest-point queries (registration correspondences), segment and
//! ray intersection (strand regrowth, inner-layer removal) and a parity-based
//! point-in-mesh test.

use super::mesh::{Aabb, TriangleMesh};
use crate::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    /// Leaf: `start..start+count` into `order`; inner: children at `left`, `left + 1`.
    start: usize,
    count: usize,
    left: usize,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy)]
pub struct ClosestHit {
    pub point: Vec3,
    pub triangle: usize,
    /// Barycentric coordinates of `point` in `triangle`.
    pub bary: [f64; 3],
    pub distance2: f64,
}

impl Bvh {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let mut bvh = Bvh { order: (0..tris.len()).collect(), tris, nodes: Vec::new() };
        if !bvh.tris.is_empty() {
            let centroids: Vec<Vec3> = bvh.tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
            bvh.nodes.push(Node { bbox: Aabb::empty(), start: 0, count: bvh.tris.len(), left: 0 });
            bvh.split(0, &centroids);
        }
        bvh
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    fn split(&mut self, node: usize, centroids: &[Vec3]) {
        let (start, count) = (self.nodes[node].start, self.nodes[node].count);
        let mut bbox = Aabb::empty();
        let mut cbox = Aabb::empty();
        for &t in &self.order[start..start + count] {
            for p in &self.tris[t] {
                bbox.grow(p);
            }
            cbox.grow(&centroids[t]);
        }
        self.nodes[node].bbox = bbox;
        if count <= LEAF_SIZE {
            return;
        }
        let ext = cbox.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let slice = &mut self.order[start..start + count];
        slice.sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let half = count / 2;
        let left = self.nodes.len();
        self.nodes.push(Node { bbox: Aabb::empty(), start, count: half, left: 0 });
        self.nodes.push(Node { bbox: Aabb::empty(), start: start + half, count: count - half, left: 0 });
        self.nodes[node].left = left;
        self.nodes[node].count = 0;
        self.split(left, centroids);
        self.split(left + 1, centroids);
    }

    pub fn closest_point(&self, p: &Vec3) -> Option<ClosestHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<ClosestHit> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let bound = best.map_or(f64::INFINITY, |b| b.distance2);
            if node.bbox.distance2(p) > bound {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    let (q, bary) = closest_on_triangle(p, &self.tris[t]);
                    let d2 = (q - p).norm_squared();
                    let better = match best {
                        None => true,
                        Some(b) => d2 < b.distance2 || (d2 == b.distance2 && t < b.triangle),
                    };
                    if better {
                        best = Some(ClosestHit { point: q, triangle: t, bary, distance2: d2 });
                    }
                }
            } else {
                let (l, r) = (node.left, node.left + 1);
                let dl = self.nodes[l].bbox.distance2(p);
                let dr = self.nodes[r].bbox.distance2(p);
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }

    /// Parameters `t` in `[t_min, t_max]` at which the ray `origin + t * dir`
    /// crosses a triangle, sorted ascending.
    pub fn ray_hits(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> Vec<(f64, usize)> {
        let mut hits = Vec::new();
        if self.nodes.is_empty() {
            return hits;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !slab_hit(&node.bbox, origin, &inv, t_min, t_max) {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    if let Some(h) = ray_triangle(origin, dir, &self.tris[t]) {
                        if h.0 >= t_min && h.0 <= t_max {
                            hits.push((h.0, t));
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.left + 1);
            }
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits
    }

    /// First parameter in `(0, 1]` at which segment `a -> b` crosses the mesh.
    pub fn segment_hit(&self, a: &Vec3, b: &Vec3) -> Option<(f64, usize)> {
        let d = b - a;
        if d.norm_squared() == 0.0 {
            return None;
        }
        self.ray_hits(a, &d, 1e-12, 1.0).into_iter().next()
    }

    /// Whether `p` lies strictly inside a closed mesh, by majority vote of
    /// ray-crossing parity along three fixed non-axis-aligned directions.
    pub fn contains(&self, p: &Vec3) -> bool {
        const DIRS: [[f64; 3]; 3] = [
            [0.5773502691896258, 0.5773502691896257, 0.577350269189626],
            [-0.3162277660168379, 0.8944271909999159, 0.316227766016838],
            [0.2672612419124244, -0.5345224838248488, -0.8017837257372732],
        ];
        let mut votes = 0;
        for d in DIRS {
            let dir = Vec3::new(d[0], d[1], d[2]);
            let n = self.ray_hits(p, &dir, 0.0, f64::INFINITY).len();
            if n % 2 == 1 {
                votes += 1;
            }
        }
        votes >= 2
    }
}

fn slab_hit(b: &Aabb, o: &Vec3, inv: &Vec3, t_min: f64, t_max: f64) -> bool {
    let mut lo = t_min;
    let mut hi = t_max;
    for k in 0..3 {
        let t1 = (b.min[k] - o[k]) * inv[k];
        let t2 = (b.max[k] - o[k]) * inv[k];
        let (a, c) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if a.is_nan() || c.is_nan() {
            // Ray parallel to and on the slab plane: keep conservative.
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return false;
            }
            continue;
        }
        lo = lo.max(a);
        hi = hi.min(c);
        if lo > hi {
            return false;
        }
    }
    true
}

/// Möller-Trumbore; returns `(t, u, v)`.
pub fn ray_triangle(o: &Vec3, d: &Vec3, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = o - tri[0];
    let u = tv.dot(&pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qv = tv.cross(&e1);
    let v = d.dot(&qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(&qv) * inv, u, v))
}

/// Closest point on a triangle and its barycentric coordinates
/// (Ericson, Real-Time Collision Detection, 5.1.5).
pub fn closest_on_triangle(p: &Vec3, tri: &[Vec3; 3]) -> (Vec3, [f64; 3]) {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

/// Closest point on segment `a-b` to `p`, with its parameter in `[0, 1]`.
pub fn closest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> (Vec3, f64) {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    (a + d * t, t)
}
