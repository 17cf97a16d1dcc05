use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::Vec3;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

/// Indexed triangle mesh with optional named per-vertex boolean channels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub flags: BTreeMap<String, Vec<bool>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, faces, flags: BTreeMap::new() };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(Error::validation(None, format!("face {fi} references a vertex out of range (n = {n})")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::validation(None, format!("face {fi} is degenerate")));
            }
        }
        for (name, channel) in &self.flags {
            if channel.len() != n {
                return Err(Error::validation(
                    None,
                    format!("flag channel `{name}` has {} entries for {n} vertices", channel.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.faces.is_empty()
    }

    pub fn flag(&self, name: &str) -> Option<&[bool]> {
        self.flags.get(name).map(Vec::as_slice)
    }

    pub fn set_flag(&mut self, name: &str, values: Vec<bool>) {
        assert_eq!(values.len(), self.vertices.len(), "flag channel length");
        self.flags.insert(name.to_string(), values);
    }

    /// Indices of vertices with `name` set.
    pub fn flagged(&self, name: &str) -> Vec<usize> {
        self.flag(name).map(|f| (0..f.len()).filter(|&i| f[i]).collect()).unwrap_or_default()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume; positive for closed meshes with outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0] as usize];
                let b = self.vertices[f[1] as usize];
                let c = self.vertices[f[2] as usize];
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Sorted, deduplicated 1-ring of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k] as usize;
                let b = f[(k + 1) % 3] as usize;
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        for n in &mut nbrs {
            n.sort_unstable();
            n.dedup();
        }
        nbrs
    }

    /// Area-weighted vertex normals (unit, or zero for isolated vertices).
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let a = self.vertices[f[0] as usize];
            let b = self.vertices[f[1] as usize];
            let c = self.vertices[f[2] as usize];
            let n = (b - a).cross(&(c - a));
            for &i in f {
                normals[i as usize] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    /// Connected-component label per vertex (labels are dense, ordered by
    /// smallest vertex index) and the number of components.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            for k in 0..3 {
                let a = find(&mut parent, f[k] as usize);
                let b = find(&mut parent, f[(k + 1) % 3] as usize);
                if a != b {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    parent[hi] = lo;
                }
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut root_label = vec![usize::MAX; n];
        let mut count = 0;
        for v in 0..n {
            let r = find(&mut parent, v);
            if root_label[r] == usize::MAX {
                root_label[r] = count;
                count += 1;
            }
            label[v] = root_label[r];
        }
        (label, count)
    }

    /// Keeps faces whose three vertices are all in `keep`, drops unreferenced
    /// vertices, and returns the new mesh plus the old index of each new vertex.
    pub fn submesh(&self, keep: &[bool]) -> (TriangleMesh, Vec<usize>) {
        let faces: Vec<[u32; 3]> = self.faces.iter().filter(|f| f.iter().all(|&i| keep[i as usize])).copied().collect();
        self.reindexed(faces)
    }

    /// Drops vertices not referenced by any face.
    pub fn compact(&self) -> (TriangleMesh, Vec<usize>) {
        self.reindexed(self.faces.clone())
    }

    fn reindexed(&self, faces: Vec<[u32; 3]>) -> (TriangleMesh, Vec<usize>) {
        let mut used = vec![false; self.vertices.len()];
        for f in &faces {
            for &i in f {
                used[i as usize] = true;
            }
        }
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut old = Vec::new();
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = old.len() as u32;
                old.push(i);
            }
        }
        let mesh = TriangleMesh {
            vertices: old.iter().map(|&i| self.vertices[i]).collect(),
            faces: faces.iter().map(|f| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]]).collect(),
            flags: self.flags.iter().map(|(k, v)| (k.clone(), old.iter().map(|&i| v[i]).collect())).collect(),
        };
        (mesh, old)
    }

    /// Uniform-weight Laplacian smoothing: `v += step * (mean(nbrs) - v)`.
    pub fn laplacian_smooth(&mut self, iterations: usize, step: f64) {
        let nbrs = self.vertex_neighbors();
        for _ in 0..iterations {
            let next: Vec<Vec3> = self
                .vertices
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if nbrs[i].is_empty() {
                        return *v;
                    }
                    let mean =
                        nbrs[i].iter().fold(Vec3::zeros(), |acc, &j| acc + self.vertices[j]) / nbrs[i].len() as f64;
                    v + (mean - v) * step
                })
                .collect();
            self.vertices = next;
        }
    }

    /// Undirected edges that belong to exactly one face.
    pub fn boundary_edges(&self) -> std::collections::HashSet<(u32, u32)> {
        let mut count: std::collections::HashMap<(u32, u32), u32> = std::collections::HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect()
    }

    pub fn transform_points(&mut self, f: impl Fn(&Vec3) -> Vec3) {
        for v in &mut self.vertices {
            *v = f(v);
        }
    }
}

/// UV sphere with single-vertex poles. Vertices are ordered: north pole
/// (+y), then `lat - 1` rings of `lon` vertices from north to south, then
/// the south pole. Ring `r` (1-based) sits at polar angle `r * pi / lat`.
pub fn uv_sphere(center: Vec3, radius: f64, lat: usize, lon: usize) -> TriangleMesh {
    assert!(lat >= 2 && lon >= 3);
    let mut vertices = Vec::with_capacity(2 + (lat - 1) * lon);
    vertices.push(center + Vec3::new(0.0, radius, 0.0));
    for r in 1..lat {
        let theta = std::f64::consts::PI * r as f64 / lat as f64;
        for k in 0..lon {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / lon as f64;
            vertices.push(center + spherical(radius, theta, phi));
        }
    }
    vertices.push(center + Vec3::new(0.0, -radius, 0.0));
    let south = (vertices.len() - 1) as u32;
    let ring = |r: usize, k: usize| (1 + (r - 1) * lon + (k % lon)) as u32;
    let mut faces = Vec::new();
    for k in 0..lon {
        faces.push([0, ring(1, k), ring(1, k + 1)]);
    }
    for r in 1..lat - 1 {
        for k in 0..lon {
            let a = ring(r, k);
            let b = ring(r, k + 1);
            let c = ring(r + 1, k + 1);
            let d = ring(r + 1, k);
            faces.push([a, c, b]);
            faces.push([a, d, c]);
        }
    }
    for k in 0..lon {
        faces.push([south, ring(lat - 1, k + 1), ring(lat - 1, k)]);
    }
    TriangleMesh { vertices, faces, flags: BTreeMap::new() }
}

/// Point at polar angle `theta` from +y and azimuth `phi` measured from +z
/// towards +x, so `phi` matches the camera azimuth convention.
pub fn spherical(radius: f64, theta: f64, phi: f64) -> Vec3 {
    let s = theta.sin();
    Vec3::new(radius * s * phi.sin(), radius * theta.cos(), radius * s * phi.cos())
}
