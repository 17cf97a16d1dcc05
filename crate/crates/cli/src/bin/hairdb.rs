//! Hairstyle database maintenance and retrieval queries.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use hairvid_core::database::{build_database, load_database, retrieve, RoughMeshParams};
use hairvid_core::scene;
use hairvid_core::SceneConfig;

#[derive(Parser)]
#[command(name = "hairdb", version, about = "Build and query a hairstyle database")]
struct Cli {
    /// `key = value` overrides of the default constants.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build rough meshes and `meta.txt` for every `<id>.hstr` in a directory.
    Build { dir: PathBuf },
    /// Rank the styles of a database by strand-set distance to a query.
    Query {
        query: PathBuf,
        dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
    },
}

fn load_config(path: Option<&Path>) -> Result<SceneConfig> {
    Ok(match path {
        Some(p) => SceneConfig::load(p)?,
        None => SceneConfig::default(),
    })
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let params = RoughMeshParams::from_config(&cfg);
    match cli.command {
        Command::Build { dir } => {
            let db = build_database(&dir, &params, cfg.db_resample_spacing)?;
            for e in &db.entries {
                println!(
                    "{} extents {:.4} {:.4} area {:.5} vertices {}",
                    e.id(),
                    e.rough.x_extent,
                    e.rough.y_extent,
                    e.rough.surface_area,
                    e.rough.mesh.vertices.len()
                );
            }
        }
        Command::Query { query, dir, k } => {
            let q = scene::load_strands(&query, "query")?;
            let db = load_database(&dir, &params, cfg.db_resample_spacing)?;
            for (rank, (id, d)) in retrieve(&q, &db, &db.ids(), k)?.iter().enumerate() {
                println!("{} {id} {d:.6}", rank + 1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
