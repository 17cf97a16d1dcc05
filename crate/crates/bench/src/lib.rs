//! Shared fixtures for the benchmarks.

use nalgebra::{Matrix3, Matrix3x4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hairvid_core::deform::AnchorTransforms;
use hairvid_core::scene::{Strand, StrandSet};
use hairvid_core::Vec3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` random-walk strands of `vertices` points each inside a 0.2 cube.
pub fn random_strands(count: usize, vertices: usize, seed: u64) -> StrandSet {
    let mut r = rng(seed);
    let strands = (0..count)
        .map(|_| {
            let mut p = Vec3::new(r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1));
            let pts = (0..vertices)
                .map(|_| {
                    p += Vec3::new(r.gen_range(-2e-3..2e-3), -3e-3, r.gen_range(-2e-3..2e-3));
                    p
                })
                .collect();
            Strand::new(pts).expect("distinct points")
        })
        .collect();
    StrandSet::new(strands, "bench")
}

/// Anchors on `points` carrying small random affine transforms.
pub fn random_anchors(points: &[Vec3], seed: u64) -> AnchorTransforms {
    let mut r = rng(seed);
    let transforms: Vec<Matrix3x4<f64>> = points
        .iter()
        .map(|_| {
            let a = Matrix3::identity() + Matrix3::from_fn(|_, _| r.gen_range(-0.05..0.05));
            let mut t = Matrix3x4::zeros();
            t.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
            t.set_column(3, &Vec3::new(r.gen_range(-0.01..0.01), 0.0, 0.0));
            t
        })
        .collect();
    AnchorTransforms {
        deformed: points.iter().zip(&transforms).map(|(v, t)| t * v.push(1.0)).collect(),
        original: points.to_vec(),
        confidence: vec![1.0; points.len()],
        transforms,
    }
}
