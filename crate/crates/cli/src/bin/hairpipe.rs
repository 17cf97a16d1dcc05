//! Reconstruction pipeline, synthetic scenes, evaluation and hair editing.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use hairvid_core::pipeline::{evaluate_iou, generate_synthetic_scene, morph, recolor, run_pipeline, SynthSpec};
use hairvid_core::scene::{self, io, layer_path, Raster};
use hairvid_core::SceneConfig;

#[derive(Parser)]
#[command(name = "hairpipe", version, about = "Hair strand reconstruction from multi-view hair segmentations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct strands for a scene directory.
    Run {
        scene: PathBuf,
        /// Hairstyle database directory (`<id>.hstr` files).
        #[arg(long)]
        db: PathBuf,
        /// `key = value` overrides of the default constants.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write a synthetic scene, its ground truth and a style database.
    Synth {
        /// `key = value` scene description; missing keys keep their defaults.
        spec: PathBuf,
        out: PathBuf,
    },
    /// IOU of projected strands against per-frame hair masks.
    Eval {
        strands: PathBuf,
        scene: PathBuf,
        /// Directory with `hair_mask_<id>.pgm` or `hair_prob_<id>.pgm` files.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Skip the depth-visibility test when projecting.
        #[arg(long)]
        no_occlusion: bool,
    },
    /// Interpolate two strand sets grown from the same roots.
    Morph {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        /// Head mesh whose `face` flag trims strands.
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long, default_value = "morph.hstr")]
        out: PathBuf,
    },
    /// Darken (factor < 1) or lighten (factor > 1) strand colors.
    Recolor {
        strands: PathBuf,
        #[arg(long)]
        factor: f64,
        #[arg(long, default_value = "recolored.hstr")]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<SceneConfig> {
    Ok(match path {
        Some(p) => SceneConfig::load(p)?,
        None => SceneConfig::default(),
    })
}

fn gt_mask(dir: &Path, frame_id: u32, threshold: f64) -> Result<Raster<bool>> {
    let mask = layer_path(dir, "hair_mask", frame_id, "pgm");
    if mask.exists() {
        return Ok(io::mask_from_pgm(&io::parse_pgm(&io::read_bytes(&mask)?, &mask)?));
    }
    let prob = layer_path(dir, "hair_prob", frame_id, "pgm");
    if prob.exists() {
        let p = io::prob_from_pgm(&io::parse_pgm(&io::read_bytes(&prob)?, &prob)?);
        return Ok(p.map(|&v| v as f64 > threshold));
    }
    bail!("no ground-truth mask for frame {frame_id} in {}", dir.display())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scene, db, config, out } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.scene_dir = scene;
            cfg.db_dir = db;
            cfg.out_dir = out;
            let result = run_pipeline(&cfg)?;
            print!("{}", result.report.to_text(true));
        }
        Command::Synth { spec, out } => {
            let spec = SynthSpec::parse(&io::read_text(&spec)?)?;
            let s = generate_synthetic_scene(&spec, &out)?;
            println!(
                "wrote {} frames, {} ground-truth strands and {} database styles to {}",
                s.scene.frames.len(),
                s.ground_truth.len(),
                s.styles.len(),
                out.display()
            );
        }
        Command::Eval { strands, scene: scene_dir, gt, config, no_occlusion } => {
            let cfg = load_config(config.as_deref())?;
            let set = scene::load_strands(&strands, "eval")?;
            let loaded = scene::load_scene(&scene_dir, cfg.head_width)?;
            if loaded.scale != 1.0 {
                bail!(
                    "scene {} is rescaled by {} on load; strands must be in the normalized frame",
                    scene_dir.display(),
                    loaded.scale
                );
            }
            let occlusion = (!no_occlusion).then_some(cfg.color_depth_tolerance);
            let mut sum = 0.0;
            for f in &loaded.frames {
                let mask = gt_mask(&gt, f.frame_id, cfg.hair_threshold)?;
                let v = evaluate_iou(&set, f, &mask, cfg.iou_line_width, occlusion)
                    .with_context(|| format!("frame {}", f.frame_id))?;
                println!("frame {} iou {v:.4}", f.frame_id);
                sum += v;
            }
            println!("mean iou {:.4}", sum / loaded.frames.len().max(1) as f64);
        }
        Command::Morph { a, b, t, head, out } => {
            if !(0.0..=1.0).contains(&t) {
                bail!("--t must lie in [0, 1], got {t}");
            }
            let sa = scene::load_strands(&a, "a")?;
            let sb = scene::load_strands(&b, "b")?;
            let head = head.map(|p| scene::load_mesh(&p)).transpose()?;
            let m = morph(&sa, &sb, t, head.as_ref())?;
            scene::save_strands(&m, &out)?;
            println!("wrote {} strands to {}", m.len(), out.display());
        }
        Command::Recolor { strands, factor, out } => {
            let set = scene::load_strands(&strands, "recolor")?;
            let r = recolor(&set, factor)?;
            scene::save_strands(&r, &out)?;
            println!("wrote {} strands to {}", r.len(), out.display());
        }
    }
    Ok(())
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
