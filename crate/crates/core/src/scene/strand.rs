use crate::error::{Error, Result};
use crate::Vec3;

/// Directed 3D polyline, root first, with per-vertex unit tangents.
#[derive(Debug, Clone, PartialEq)]
pub struct Strand {
    vertices: Vec<Vec3>,
    tangents: Vec<Vec3>,
    colors: Option<Vec<[f64; 3]>>,
}

impl Strand {
    pub fn new(vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::Argument(format!("a strand needs at least 2 vertices, got {}", vertices.len())));
        }
        if let Some(i) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::Argument(format!("strand vertices {i} and {} coincide", i + 1)));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Argument("strand vertex is not finite".into()));
        }
        let tangents = tangents_of(&vertices);
        Ok(Strand { vertices, tangents, colors: None })
    }

    /// Builds a strand after dropping consecutive duplicates; `None` if fewer
    /// than two distinct vertices remain.
    pub fn from_points_dedup(mut points: Vec<Vec3>) -> Option<Self> {
        points.dedup();
        Strand::new(points).ok()
    }

    pub fn with_colors(mut self, colors: Vec<[f64; 3]>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::Argument(format!("{} colors for {} vertices", colors.len(), self.vertices.len())));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn without_colors(mut self) -> Self {
        self.colors = None;
        self
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn tangents(&self) -> &[Vec3] {
        &self.tangents
    }

    pub fn colors(&self) -> Option<&[[f64; 3]]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn root(&self) -> &Vec3 {
        &self.vertices[0]
    }

    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn reversed(&self) -> Strand {
        let mut v = self.vertices.clone();
        v.reverse();
        let mut s = Strand::new(v).expect("reversal keeps strand valid");
        if let Some(c) = &self.colors {
            let mut c = c.clone();
            c.reverse();
            s.colors = Some(c);
        }
        s
    }

    /// Applies `f` to every vertex and recomputes tangents. Returns `None`
    /// when the mapped polyline degenerates.
    pub fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> Option<Strand> {
        let pts: Vec<Vec3> = self.vertices.iter().map(f).collect();
        let mut s = Strand::new(pts).ok()?;
        s.colors = self.colors.clone();
        Some(s)
    }
}

/// Forward-difference unit tangents; the last vertex copies its predecessor.
pub fn tangents_of(vertices: &[Vec3]) -> Vec<Vec3> {
    let n = vertices.len();
    let mut t: Vec<Vec3> = vertices.windows(2).map(|w| (w[1] - w[0]).normalize()).collect();
    if n >= 2 {
        t.push(t[n - 2]);
    }
    t
}

/// A collection of strands with a free-text provenance tag.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrandSet {
    pub strands: Vec<Strand>,
    pub source_tag: String,
}

impl StrandSet {
    pub fn new(strands: Vec<Strand>, source_tag: impl Into<String>) -> Self {
        StrandSet { strands, source_tag: source_tag.into() }
    }

    pub fn len(&self) -> usize {
        self.strands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strands.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.strands.iter().map(Strand::len).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &Vec3> {
        self.strands.iter().flat_map(|s| s.vertices().iter())
    }

    pub fn bbox(&self) -> crate::geom::Aabb {
        crate::geom::Aabb::from_points(self.points())
    }

    pub fn total_length(&self) -> f64 {
        self.strands.iter().map(Strand::length).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangents_are_unit_and_last_copies_previous() {
        let s =
            Strand::new(vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(2.0, 3.0, 0.0)]).unwrap();
        assert_eq!(s.tangents()[0], Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(s.tangents()[1], Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(s.tangents()[2], s.tangents()[1]);
        for t in s.tangents() {
            assert!((t.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_strands_rejected() {
        assert!(Strand::new(vec![Vec3::zeros()]).is_err());
        assert!(Strand::new(vec![Vec3::zeros(), Vec3::zeros()]).is_err());
        assert!(Strand::from_points_dedup(vec![Vec3::zeros(), Vec3::zeros(), Vec3::x()]).is_some());
    }
}
