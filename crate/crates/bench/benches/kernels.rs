use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use hairvid_bench::{random_anchors, random_strands};
use hairvid_core::database::StrandIndex;
use hairvid_core::deform::{build_orientation_field, deform_hairstyle, BlendParams, FieldParams};
use hairvid_core::geom::{uv_sphere, Aabb, VoxelGrid};
use hairvid_core::hull::carve;
use hairvid_core::pipeline::generate_synthetic;
use hairvid_core::pipeline::SynthSpec;
use hairvid_core::strands2d::{grayscale, orientation_map, FilterBank};
use hairvid_core::{SceneConfig, Vec3};

fn strand_distance(c: &mut Criterion) {
    let h = random_strands(2000, 50, 1);
    let q = random_strands(200, 30, 2);
    let index = StrandIndex::new(&h);
    c.bench_function("strand_distance_200x30_vs_100k", |b| b.iter(|| index.distance(black_box(&q))));
}

fn blending(c: &mut Criterion) {
    let sphere = uv_sphere(Vec3::zeros(), 0.1, 40, 80);
    let anchors = random_anchors(&sphere.vertices, 3);
    let style = random_strands(500, 50, 4);
    let params = BlendParams::from_config(&SceneConfig::default());
    c.bench_function("deform_500x50_strands", |b| b.iter(|| deform_hairstyle(black_box(&style), &anchors, params)));
}

fn field_solve(c: &mut Criterion) {
    let best = random_strands(400, 40, 5);
    let query = random_strands(100, 20, 6);
    let bounds = Aabb::from_points(&[Vec3::repeat(-0.12), Vec3::repeat(0.12)]);
    let params = FieldParams { resolution: 48, ..FieldParams::default() };
    let mut g = c.benchmark_group("field");
    g.sample_size(10);
    g.bench_function("orientation_field_48", |b| {
        b.iter(|| build_orientation_field(black_box(&best), &query, &bounds, &params).unwrap())
    });
    g.finish();
}

fn hull_and_filters(c: &mut Criterion) {
    let spec = SynthSpec::parse("cameras = 8\nwidth = 160\nheight = 160\nfocal = 400\ndb_styles = 1\n").unwrap();
    let scene = generate_synthetic(&spec).unwrap().scene;
    let bounds = Aabb::from_points(&[Vec3::repeat(-0.12), Vec3::repeat(0.12)]);
    let grid = VoxelGrid::covering(&bounds, 1.0, 96);
    let mut g = c.benchmark_group("frames");
    g.sample_size(10);
    g.bench_function("carve_8_frames_96", |b| b.iter(|| carve(black_box(&scene.frames), grid.clone()).unwrap()));

    let cfg = SceneConfig::default();
    let bank =
        FilterBank::new(cfg.n_filters, cfg.kernel_size, cfg.wavelength, cfg.sigma_across, cfg.sigma_along).unwrap();
    let f = &scene.frames[4];
    let image = grayscale(f.color.as_ref().unwrap());
    g.bench_function("orientation_map_160", |b| b.iter(|| orientation_map(black_box(&image), &f.mask, &bank)));
    g.finish();
}

criterion_group!(benches, strand_distance, blending, field_solve, hull_and_filters);
criterion_main!(benches);
