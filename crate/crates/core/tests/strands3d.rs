use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hairvid_core::geom::closest_on_segment;
use hairvid_core::scene::{Camera, CameraFrame, Intrinsics, Raster, Strand};
use hairvid_core::strands2d::Strand2D;
use hairvid_core::strands3d::{lift_strands, merge_strands, remove_peaks};
use hairvid_core::Vec3;

fn camera() -> Camera {
    let k = Intrinsics { fx: 400.0, fy: 400.0, cx: 100.0, cy: 100.0 };
    Camera::look_at(k, Vec3::new(0.0, 0.0, 1.0), Vec3::zeros())
}

fn frame_with_depth(depth: Raster<f32>) -> CameraFrame {
    let (w, h) = (depth.width, depth.height);
    CameraFrame::new(
        0,
        camera(),
        Raster::filled(w, h, true),
        Raster::filled(w, h, 1.0),
        Raster::filled(w, h, 1),
        depth,
        None,
    )
    .unwrap()
}

fn dist_to_polyline(p: &Vec3, pts: &[Vec3]) -> f64 {
    pts.windows(2).map(|w| (p - closest_on_segment(p, &w[0], &w[1]).0).norm()).fold(f64::INFINITY, f64::min)
}

#[test]
fn planar_lift_is_straight_and_holes_split() {
    let mut depth = Raster::filled(200, 200, 0.8f32);
    let s = Strand2D { points: (20..120).map(|x| Vector2::new(x as f64, 90.0)).collect(), directed: true };
    let f = frame_with_depth(depth.clone());
    let (out, dropped) = lift_strands(std::slice::from_ref(&s), &f);
    assert_eq!((out.len(), dropped), (1, 0));
    let v = out[0].vertices();
    let dir = (v[v.len() - 1] - v[0]).normalize();
    for p in v {
        let off = (p - v[0]) - dir * (p - v[0]).dot(&dir);
        assert!(off.norm() < 1e-9);
    }
    for x in 60..64 {
        for y in 85..95 {
            depth.set(x, y, 0.0);
        }
    }
    let (out, _) = lift_strands(&[s], &frame_with_depth(depth));
    assert_eq!(out.len(), 2);
}

#[test]
fn helix_render_then_lift_round_trip() {
    // helix around the optical axis, seen from the front
    let helix = |t: f64| Vec3::new(0.05 * (6.0 * t).cos(), 0.2 * t - 0.1, 0.05 * (6.0 * t).sin());
    let cam = camera();
    let samples: Vec<Vec3> = (0..=400).map(|i| helix(i as f64 / 400.0)).collect();
    // depth raster of the helix's local depth, rendered per pixel from the
    // analytic curve: each pixel takes the depth of the nearest projected sample
    let proj: Vec<(Vector2<f64>, f64)> = samples.iter().map(|p| cam.project(p).unwrap()).collect();
    let depth = Raster::from_fn(200, 200, |x, y| {
        let q = Vector2::new(x as f64, y as f64);
        let (d2, z) = proj.iter().map(|(p, z)| ((p - q).norm_squared(), *z)).fold((f64::INFINITY, 0.0), |a, b| {
            if b.0 < a.0 {
                b
            } else {
                a
            }
        });
        if d2 < 9.0 {
            z as f32
        } else {
            0.0
        }
    });
    let frame = frame_with_depth(depth);
    let s2 = Strand2D { points: proj.iter().step_by(4).map(|(p, _)| *p).collect(), directed: true };
    let (out, _) = lift_strands(&[s2], &frame);
    assert!(!out.is_empty());
    for s in &out {
        for p in s.vertices() {
            let d = dist_to_polyline(p, &samples);
            assert!(d < 1e-3, "{d}");
        }
    }
}

#[test]
fn remove_peaks_keeps_surviving_coordinates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.gen_range(2..40);
        let mut p = Vec3::zeros();
        let mut v = Vec::new();
        for _ in 0..n {
            let big = rng.gen_bool(0.15);
            let step = if big { 0.01 } else { 0.001 };
            p += Vec3::new(rng.gen_range(0.2..1.0), rng.gen_range(-1.0..1.0), 0.0).normalize() * step;
            v.push(p);
        }
        let s = Strand::new(v.clone()).unwrap();
        let out = remove_peaks(&s, 0.002);
        let total: usize = out.iter().map(Strand::len).sum();
        assert!(total <= n);
        for piece in &out {
            for q in piece.vertices() {
                assert!(v.contains(q));
            }
            for w in piece.vertices().windows(2) {
                assert!((w[1] - w[0]).norm() <= 0.002);
            }
        }
    }
}

#[test]
fn jittered_copies_cluster_to_base_curves() {
    let delta = 0.004;
    let base: Vec<Vec<Vec3>> = (0..10)
        .map(|c| {
            (0..60)
                .map(|i| {
                    let t = i as f64 * 0.0015;
                    Vec3::new(0.02 * c as f64, -t, 0.01 * (t * 40.0 + c as f64).sin())
                })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut input = Vec::new();
    for k in 0..300 {
        let b = &base[k % 10];
        let start = rng.gen_range(0..20);
        let end = rng.gen_range(40..60);
        let pts: Vec<Vec3> = b[start..end]
            .iter()
            .map(|p| {
                let j = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                p + j * (delta / 2.0 / 3f64.sqrt()) * 0.99
            })
            .collect();
        input.push((Strand::new(pts).unwrap(), k as u32));
    }
    let in_len: f64 = input.iter().map(|(s, _)| s.length()).sum();
    let out = merge_strands(input, delta, 10);
    assert!(out.len() <= 15, "{} strands", out.len());
    for s in &out.set.strands {
        let ok = base.iter().any(|b| s.vertices().iter().all(|p| dist_to_polyline(p, b) < delta));
        assert!(ok);
        for w in s.tangents().windows(2) {
            assert!(w[0].dot(&w[1]) >= 0.0);
        }
    }
    assert!(out.set.total_length() <= in_len);
}
