//! Analytic test scenes: a sphere head wearing a cap of meridian strands,
//! seen by a ring of cameras, plus a family of database hairstyles.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::database::Hairstyle;
use crate::error::{Error, Result};
use crate::geom::{spherical, uv_sphere, TriangleMesh};
use crate::render::{ZBuffer, NO_TRIANGLE};
use crate::scene::{self, direction_bin, io, Camera, CameraFrame, Intrinsics, Raster, Scene, Strand, StrandSet};
use crate::scene::{FACE, SCALP_ROOT};
use crate::Vec3;

macro_rules! synth_spec {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty = $default:expr; )*) => {
        /// Geometry of a synthetic scene, readable from `key = value` text.
        #[derive(Debug, Clone, PartialEq)]
        pub struct SynthSpec {
            $( $(#[$doc])* pub $name: $ty, )*
        }

        impl Default for SynthSpec {
            fn default() -> Self {
                SynthSpec { $( $name: $default, )* }
            }
        }

        impl SynthSpec {
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $( stringify!($name) => {
                        self.$name = value.parse::<$ty>().map_err(|_| {
                            Error::Config(format!("`{key}`: cannot parse `{value}`"))
                        })?;
                    } )*
                    _ => return Err(Error::Config(format!("unknown synth key `{key}`"))),
                }
                Ok(())
            }

            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $( let _ = writeln!(out, "{} = {}", stringify!($name), self.$name); )*
                out
            }
        }
    };
}

synth_spec! {
    head_radius: f64 = 0.1;
    head_lat: usize = 60;
    head_lon: usize = 360;
    /// Polar band of the scalp roots, degrees from the top.
    scalp_min_deg: f64 = 3.0;
    scalp_max_deg: f64 = 45.0;
    strands: usize = 200;
    strand_vertices: usize = 60;
    root_deg: f64 = 2.0;
    /// Polar angle of the strand tips at the front and at the back.
    tip_front_deg: f64 = 60.0;
    tip_back_deg: f64 = 100.0;
    /// Hair layer radius at the roots and at the tips.
    root_radius: f64 = 0.1015;
    tip_radius: f64 = 0.108;
    cameras: usize = 24;
    azimuth_min_deg: f64 = -90.0;
    azimuth_max_deg: f64 = 90.0;
    elevation_deg: f64 = 15.0;
    distance: f64 = 0.7;
    focal: f64 = 650.0;
    width: usize = 256;
    height: usize = 256;
    /// Stripes around the head in the color layer.
    stripes: usize = 96;
    /// Number of database styles; one of them is a perturbed copy of the
    /// ground truth.
    db_styles: usize = 10;
    seed: u64 = 7;
}

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", ln + 1)))?;
            spec.set(k.trim(), v.trim())?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras == 0 || self.strands == 0 || self.strand_vertices < 2 {
            return Err(Error::Config("synthetic scene needs cameras and strands".into()));
        }
        if !(self.root_radius > self.head_radius && self.tip_radius >= self.root_radius) {
            return Err(Error::Config("hair layer must lie outside the head".into()));
        }
        if !(self.scalp_min_deg < self.scalp_max_deg && self.root_deg < self.tip_front_deg.min(self.tip_back_deg)) {
            return Err(Error::Config("inconsistent polar angles".into()));
        }
        Ok(())
    }

    /// Azimuth of camera `i`, evenly spread over the configured range.
    pub fn camera_azimuth(&self, i: usize) -> f64 {
        let lo = self.azimuth_min_deg.to_radians();
        let hi = self.azimuth_max_deg.to_radians();
        if self.cameras == 1 {
            return 0.5 * (lo + hi);
        }
        lo + (hi - lo) * i as f64 / (self.cameras - 1) as f64
    }

    pub fn camera(&self, i: usize) -> Camera {
        let g = self.camera_azimuth(i);
        let e = self.elevation_deg.to_radians();
        let eye = Vec3::new(e.cos() * g.sin(), e.sin(), e.cos() * g.cos()) * self.distance;
        let k = Intrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
        };
        Camera::look_at(k, eye, Vec3::zeros())
    }
}

/// Parameters of one member of the meridian hairstyle family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleShape {
    pub root_deg: f64,
    pub tip_front_deg: f64,
    pub tip_back_deg: f64,
    /// Extra tip angle proportional to `sin(phi)`, for a side part.
    pub side_deg: f64,
    pub root_radius: f64,
    pub tip_radius: f64,
    /// Radial waviness amplitude and number of waves along a strand.
    pub wave: f64,
    pub wave_count: f64,
    /// Sideways drift of the tips in radians of azimuth.
    pub swirl: f64,
}

impl StyleShape {
    pub fn from_spec(spec: &SynthSpec) -> Self {
        StyleShape {
            root_deg: spec.root_deg,
            tip_front_deg: spec.tip_front_deg,
            tip_back_deg: spec.tip_back_deg,
            side_deg: 0.0,
            root_radius: spec.root_radius,
            tip_radius: spec.tip_radius,
            wave: 0.0,
            wave_count: 0.0,
            swirl: 0.0,
        }
    }

    pub fn tip_deg(&self, phi: f64) -> f64 {
        let mid = 0.5 * (self.tip_front_deg + self.tip_back_deg);
        let half = 0.5 * (self.tip_back_deg - self.tip_front_deg);
        mid - half * phi.cos() + self.side_deg * phi.sin()
    }

    /// Strand point at parameter `s` in `[0, 1]` along the strand starting
    /// at azimuth `phi`.
    pub fn point(&self, phi: f64, s: f64) -> Vec3 {
        let theta = (self.root_deg + s * (self.tip_deg(phi) - self.root_deg)).to_radians();
        let r = self.root_radius
            + s * (self.tip_radius - self.root_radius)
            + self.wave * (1.0 - (2.0 * PI * self.wave_count * s).cos()) * 0.5;
        spherical(r, theta, phi + self.swirl * s)
    }

    pub fn strands(&self, count: usize, vertices: usize, tag: &str) -> StrandSet {
        let strands = (0..count)
            .map(|k| {
                let phi = 2.0 * PI * (k as f64 + 0.5) / count as f64;
                let pts = (0..vertices).map(|i| self.point(phi, i as f64 / (vertices - 1) as f64)).collect();
                Strand::new(pts).expect("style strands are non-degenerate")
            })
            .collect();
        StrandSet::new(strands, tag)
    }

    /// Outer surface of the hair layer: the strand family swept densely in
    /// azimuth, closed at the root by a cap at the root radius.
    pub fn cap_mesh(&self, lon: usize, rows: usize) -> TriangleMesh {
        let mut vertices = vec![Vec3::new(0.0, self.root_radius, 0.0)];
        let mut faces = Vec::new();
        // row 0 at polar angle root_deg / 2 closes the hole at the pole
        let ring = |r: usize, k: usize| (1 + r * lon + k % lon) as u32;
        for r in 0..=rows {
            for k in 0..lon {
                let phi = 2.0 * PI * k as f64 / lon as f64;
                let p = if r == 0 {
                    spherical(self.root_radius, (0.5 * self.root_deg).to_radians(), phi)
                } else {
                    self.point(phi, (r - 1) as f64 / (rows - 1) as f64)
                };
                vertices.push(p);
            }
        }
        for k in 0..lon {
            faces.push([0, ring(0, k), ring(0, k + 1)]);
        }
        for r in 0..rows {
            for k in 0..lon {
                let (a, b, c, d) = (ring(r, k), ring(r, k + 1), ring(r + 1, k + 1), ring(r + 1, k));
                faces.push([a, c, b]);
                faces.push([a, d, c]);
            }
        }
        TriangleMesh::new(vertices, faces).expect("cap mesh is valid")
    }
}

/// A generated scene with its ground truth and database styles.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub scene: Scene,
    pub ground_truth: StrandSet,
    pub shape: StyleShape,
    pub styles: Vec<Hairstyle>,
}

/// Head sphere with `scalp_root` and `face` flags.
pub fn synth_head(spec: &SynthSpec) -> TriangleMesh {
    let mut head = uv_sphere(Vec3::zeros(), spec.head_radius, spec.head_lat, spec.head_lon);
    let polar = |v: &Vec3| (v.y / spec.head_radius).clamp(-1.0, 1.0).acos().to_degrees();
    let scalp = head
        .vertices
        .iter()
        .map(|v| {
            let t = polar(v);
            t >= spec.scalp_min_deg - 1e-9 && t <= spec.scalp_max_deg + 1e-9
        })
        .collect();
    let face = head
        .vertices
        .iter()
        .map(|v| {
            let t = polar(v);
            let az = v.x.atan2(v.z).abs().to_degrees();
            (65.0..=125.0).contains(&t) && az <= 55.0
        })
        .collect();
    head.set_flag(SCALP_ROOT, scalp);
    head.set_flag(FACE, face);
    head
}

const SKIN: [f64; 3] = [0.85, 0.68, 0.58];
const HAIR_DARK: [f64; 3] = [0.18, 0.11, 0.06];
const HAIR_LIGHT: [f64; 3] = [0.62, 0.45, 0.28];

/// Hair color at azimuth `phi`: alternating light and dark stripes.
pub fn stripe_color(phi: f64, stripes: usize) -> [f64; 3] {
    let t = 0.5 + 0.5 * (stripes as f64 * phi).cos();
    [0, 1, 2].map(|c| HAIR_DARK[c] + t * (HAIR_LIGHT[c] - HAIR_DARK[c]))
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Renders one frame of the head wearing the hair cap.
fn render_frame(
    id: u32,
    camera: Camera,
    head: &TriangleMesh,
    cap: &TriangleMesh,
    spec: &SynthSpec,
) -> Result<CameraFrame> {
    let (w, h) = (spec.width, spec.height);
    let mut zb = ZBuffer::new(w, h);
    let nh = head.faces.len() as u32;
    zb.draw_mesh(head, &camera);
    let proj: Vec<_> = cap.vertices.iter().map(|v| camera.project(v)).collect();
    for (f, face) in cap.faces.iter().enumerate() {
        if let [Some(a), Some(b), Some(c)] = face.map(|i| proj[i as usize]) {
            zb.draw_triangle([a, b, c], nh + f as u32);
        }
    }
    let mut mask = Raster::filled(w, h, false);
    let mut prob = Raster::filled(w, h, 0.0f32);
    let mut labels = Raster::filled(w, h, 0u8);
    let mut color = Raster::filled(w, h, [0u8; 3]);
    for y in 0..h {
        for x in 0..w {
            let tri = *zb.triangle.get(x, y);
            if tri == NO_TRIANGLE {
                continue;
            }
            mask.set(x, y, true);
            if tri < nh {
                color.set(x, y, SKIN.map(to_u8));
                continue;
            }
            let depth = *zb.depth.get(x, y) as f64;
            let px = Vector2::new(x as f64, y as f64);
            let p = camera.unproject(&px, depth)?;
            let phi = p.x.atan2(p.z);
            let theta = (p.y / p.norm()).clamp(-1.0, 1.0).acos();
            prob.set(x, y, 1.0);
            color.set(x, y, stripe_color(phi, spec.stripes).map(to_u8));
            // root-to-tip tangent: increasing polar angle along the meridian
            let t = spherical(1.0, theta + 1e-4, phi) - spherical(1.0, theta, phi);
            let label = match (camera.project(&p), camera.project(&(p + t))) {
                (Some((a, _)), Some((b, _))) => direction_bin(b.x - a.x, b.y - a.y).map_or(5, |bin| bin + 1),
                _ => 5,
            };
            labels.set(x, y, label);
        }
    }
    CameraFrame::new(id, camera, mask, prob, labels, zb.depth, Some(color))
}

/// Members of the style family used for the database. Style
/// `gt_index` is a slightly perturbed copy of `gt`.
pub fn synth_styles(spec: &SynthSpec, gt: &StyleShape, count: usize, gt_index: usize) -> Vec<(String, StyleShape)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..count)
        .map(|i| {
            let id = format!("style_{i:02}");
            let shape = if i == gt_index {
                StyleShape {
                    tip_front_deg: gt.tip_front_deg + 2.0,
                    tip_back_deg: gt.tip_back_deg - 2.0,
                    root_radius: gt.root_radius + 0.0005,
                    tip_radius: gt.tip_radius * 1.03,
                    wave: 0.001,
                    wave_count: 2.0,
                    ..*gt
                }
            } else {
                StyleShape {
                    root_deg: gt.root_deg,
                    tip_front_deg: rng.gen_range(35.0..75.0),
                    tip_back_deg: rng.gen_range(70.0..140.0),
                    side_deg: rng.gen_range(-20.0..20.0),
                    root_radius: gt.root_radius + rng.gen_range(0.0..0.003),
                    tip_radius: gt.tip_radius + rng.gen_range(-0.003..0.02),
                    wave: rng.gen_range(0.0..0.006),
                    wave_count: rng.gen_range(1.0..4.0),
                    swirl: rng.gen_range(-0.4..0.4),
                }
            };
            (id, shape)
        })
        .collect()
}

/// Builds the full synthetic scene in memory.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let head = synth_head(spec);
    let shape = StyleShape::from_spec(spec);
    let cap = shape.cap_mesh(spec.head_lon.max(180), 120);
    let frames = (0..spec.cameras)
        .into_par_iter()
        .map(|i| render_frame(i as u32, spec.camera(i), &head, &cap, spec))
        .collect::<Result<Vec<_>>>()?;
    let ground_truth = shape.strands(spec.strands, spec.strand_vertices, "ground_truth");
    let gt_index = spec.db_styles / 3;
    let styles = synth_styles(spec, &shape, spec.db_styles, gt_index)
        .into_iter()
        .map(|(id, s)| Hairstyle { strands: s.strands(spec.strands, spec.strand_vertices, &id), id })
        .collect();
    Ok(SynthScene { scene: Scene { frames, head, scale: 1.0 }, ground_truth, shape, styles })
}

/// Writes the scene layers, `ground_truth.hstr`, `synth.txt` and, when the
/// spec asks for styles, a database directory `db/`.
pub fn write_synthetic(s: &SynthScene, spec: &SynthSpec, out: &Path) -> Result<()> {
    scene::save_scene(&s.scene, out)?;
    scene::save_strands(&s.ground_truth, &out.join("ground_truth.hstr"))?;
    io::write_file(&out.join("synth.txt"), spec.to_text().as_bytes())?;
    for style in &s.styles {
        scene::save_strands(&style.strands, &out.join("db").join(format!("{}.hstr", style.id)))?;
    }
    Ok(())
}

pub fn generate_synthetic_scene(spec: &SynthSpec, out: &Path) -> Result<SynthScene> {
    let s = generate_synthetic(spec)?;
    write_synthetic(&s, spec, out)?;
    Ok(s)
}
