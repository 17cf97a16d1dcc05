//! Blending anchor transforms onto arbitrary points.

use nalgebra::Matrix3x4;
use rayon::prelude::*;

use super::correct::AnchorTransforms;
use crate::geom::KdTree;
use crate::scene::StrandSet;
use crate::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct BlendParams {
    /// Weight of the identity transform.
    pub alpha: f64,
    /// Gaussian width of the anchor weights.
    pub sigma: f64,
    pub neighbors: usize,
}

impl BlendParams {
    pub fn from_config(cfg: &crate::SceneConfig) -> Self {
        BlendParams { alpha: cfg.blend_alpha, sigma: cfg.blend_sigma, neighbors: cfg.blend_neighbors }
    }
}

impl Default for BlendParams {
    fn default() -> Self {
        BlendParams { alpha: 0.01, sigma: 0.015, neighbors: 10 }
    }
}

/// Anchors indexed for nearest-neighbor blending.
pub struct Blender<'a> {
    anchors: &'a AnchorTransforms,
    tree: KdTree,
    params: BlendParams,
}

impl<'a> Blender<'a> {
    pub fn new(anchors: &'a AnchorTransforms, params: BlendParams) -> Self {
        Blender { tree: KdTree::new(anchors.original.clone()), anchors, params }
    }

    /// Normalized blend coefficients at `p`: the identity's share and
    /// `(anchor, share)` for the nearest anchors. They sum to one.
    pub fn coefficients(&self, p: &Vec3) -> (f64, Vec<(usize, f64)>) {
        let s2 = 2.0 * self.params.sigma * self.params.sigma;
        let near = self.tree.k_nearest(p, self.params.neighbors);
        let w: Vec<(usize, f64)> = near.iter().map(|&(i, d2)| (i, (-d2 / s2).exp())).collect();
        let total = self.params.alpha + w.iter().map(|(_, w)| w).sum::<f64>();
        (self.params.alpha / total, w.into_iter().map(|(i, w)| (i, w / total)).collect())
    }

    pub fn transform(&self, p: &Vec3) -> Matrix3x4<f64> {
        let (a, w) = self.coefficients(p);
        let mut t = Matrix3x4::identity() * a;
        for (i, wi) in w {
            t += self.anchors.transforms[i] * wi;
        }
        t
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.transform(p) * p.push(1.0)
    }
}

/// Blended transform at `p`.
pub fn blend_transform(p: &Vec3, anchors: &AnchorTransforms, params: BlendParams) -> Matrix3x4<f64> {
    Blender::new(anchors, params).transform(p)
}

/// Moves every strand vertex by its blended transform. Strands that collapse
/// onto themselves are dropped.
pub fn deform_hairstyle(style: &StrandSet, anchors: &AnchorTransforms, params: BlendParams) -> StrandSet {
    let blender = Blender::new(anchors, params);
    let strands = style.strands.par_iter().filter_map(|s| s.map_points(|p| blender.apply(p))).collect();
    StrandSet::new(strands, style.source_tag.clone())
}
