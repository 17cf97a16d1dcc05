//! Tunable constants and paths, overridable from a `key = value` text file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

macro_rules! scene_config {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty = $default:expr, positive = $pos:expr; )*) => {
        /// Every tunable constant of the pipeline plus input/output paths.
        #[derive(Debug, Clone, PartialEq)]
        pub struct SceneConfig {
            pub scene_dir: PathBuf,
            pub db_dir: PathBuf,
            pub out_dir: PathBuf,
            $( $(#[$doc])* pub $name: $ty, )*
        }

        impl Default for SceneConfig {
            fn default() -> Self {
                SceneConfig {
                    scene_dir: PathBuf::from("scene"),
                    db_dir: PathBuf::from("db"),
                    out_dir: PathBuf::from("out"),
                    $( $name: $default, )*
                }
            }
        }

        impl SceneConfig {
            /// Sets one constant from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    "scene_dir" => self.scene_dir = PathBuf::from(value),
                    "db_dir" => self.db_dir = PathBuf::from(value),
                    "out_dir" => self.out_dir = PathBuf::from(value),
                    $( stringify!($name) => {
                        self.$name = value.parse::<$ty>().map_err(|_| {
                            Error::Config(format!("`{key}`: cannot parse `{value}`"))
                        })?;
                    } )*
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            pub fn validate(&self) -> Result<()> {
                $( if $pos && !((self.$name as f64) > 0.0) {
                    return Err(Error::Config(format!(
                        "`{}` must be positive", stringify!($name)
                    )));
                } )*
                Ok(())
            }

            /// `key = value` rendering of every constant.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                let _ = writeln!(out, "scene_dir = {}", self.scene_dir.display());
                let _ = writeln!(out, "db_dir = {}", self.db_dir.display());
                let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
                $( let _ = writeln!(out, "{} = {}", stringify!($name), self.$name); )*
                out
            }
        }
    };
}

scene_config! {
    /// Reference head width after ingest normalization.
    head_width: f64 = 0.2, positive = true;

    // visual hull
    hull_resolution: usize = 128, positive = true;
    hull_bbox_scale: f64 = 1.5, positive = true;
    /// Minimum hair area as a fraction of the mean over frames.
    blur_area_ratio: f64 = 0.33, positive = true;
    hair_threshold: f64 = 0.5, positive = true;

    // 2D strands
    frame_bin_width: f64 = std::f64::consts::PI / 8.0, positive = true;
    n_filters: usize = 32, positive = true;
    kernel_size: usize = 17, positive = true;
    wavelength: f64 = 4.0, positive = true;
    sigma_across: f64 = 1.8, positive = true;
    sigma_along: f64 = 4.0, positive = true;
    trace_step: f64 = 1.0, positive = true;
    trace_min_response: f64 = 0.1, positive = true;
    trace_max_turn_deg: f64 = 15.0, positive = true;
    trace_min_length: f64 = 20.0, positive = true;

    // 3D strands
    peak_threshold: f64 = 0.002, positive = true;
    merge_distance: f64 = 0.004, positive = true;
    merge_target: usize = 100, positive = true;

    // database
    db_voxel_size: f64 = 0.005, positive = true;
    smooth_iterations: usize = 10, positive = false;
    smooth_step: f64 = 0.5, positive = true;
    db_resample_spacing: f64 = 0.004, positive = true;
    prune_extent_low: f64 = 0.8, positive = true;
    prune_extent_high: f64 = 1.2, positive = true;
    prune_area_low: f64 = 0.8, positive = true;
    prune_area_high: f64 = 1.5, positive = true;
    retrieve_k: usize = 20, positive = true;

    // registration and view correction
    reg_stiffness_start: f64 = 10.0, positive = true;
    reg_stiffness_end: f64 = 0.5, positive = true;
    reg_levels: usize = 6, positive = true;
    reg_iterations: usize = 6, positive = true;
    /// Mean closest-point distance above which registration is a failure.
    reg_max_residual: f64 = 0.01, positive = true;
    /// Camera azimuth span below which the hull cannot be registered.
    min_view_span_deg: f64 = 90.0, positive = true;
    correction_lambda: f64 = 1e-5, positive = true;
    confidence_sigma: f64 = std::f64::consts::PI / 18.0, positive = true;

    // transform blending
    blend_alpha: f64 = 0.01, positive = true;
    blend_sigma: f64 = 0.015, positive = true;
    blend_neighbors: usize = 10, positive = true;

    // orientation field and regrowth
    field_resolution: usize = 80, positive = true;
    field_w1: f64 = 1.0, positive = true;
    field_w2: f64 = 0.1, positive = false;
    /// Query influence radius in voxels.
    influence_radius: f64 = 2.0, positive = true;
    /// Regrowth stays within this many voxels of a constrained voxel.
    support_radius: f64 = 1.0, positive = true;
    regrow_step: f64 = 1.0, positive = true;
    regrow_max_steps: usize = 300, positive = true;
    regrow_epsilon: f64 = 1e-3, positive = true;
    regrow_root_offset: f64 = 1.0, positive = true;
    resample_count: usize = 50, positive = true;

    // texture and evaluation
    color_depth_tolerance: f64 = 0.012, positive = true;
    iou_line_width: f64 = 2.0, positive = true;
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SceneConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", ln + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::scene::io::read_text(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = SceneConfig::default();
        let back = SceneConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn override_and_errors() {
        let cfg = SceneConfig::parse("retrieve_k = 5 # fewer\nfield_w2=0\n").unwrap();
        assert_eq!(cfg.retrieve_k, 5);
        assert_eq!(cfg.field_w2, 0.0);
        assert!(SceneConfig::parse("nope = 1").is_err());
        assert!(SceneConfig::parse("blend_alpha = -1").is_err());
        assert!(SceneConfig::parse("blend_alpha").is_err());
    }
}
