//! Command-line front end: argument parsing, run configuration and the
//! individual commands.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use occlurend_core::optim::parse_groups;
use occlurend_core::{Error, Result};

pub use config::{Overrides, RunConfig};

/// Exit status for configuration and input errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical breakdown.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Precompute the BRDF table and the prefiltered environment pyramid.
    Prefilter,
    /// Render the frames of a scene.
    Render,
    /// Render the frames of a scene under a different environment.
    Relight,
    /// Recover mesh, textures and lighting from posed images.
    Optimize,
    /// Generate a synthetic scene with ground truth.
    Synthesize,
    /// Compare images, meshes and albedo maps.
    Metrics,
}

#[derive(Debug, Parser)]
#[command(name = "occlurend", version, about = "Occlusion-aware split-sum rendering and inverse rendering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Force Ṽ ≡ 1 in the specular term.
    #[arg(long, global = true)]
    pub no_visibility: bool,
    /// Comma-separated parameter groups to hold fixed.
    #[arg(long, global = true)]
    pub freeze: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_CONFIG
    }
}

/// Honor `OCCLUREND_THREADS` by sizing the global worker pool.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("OCCLUREND_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("OCCLUREND_THREADS must be a positive integer, got `{v}`")))?;
        // A pool may already exist when embedded; keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Load, override and validate the configuration for `cli`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let freeze = match &cli.freeze {
        Some(list) => parse_groups(list)?.into_iter().collect(),
        None => Vec::new(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        iterations: cli.iterations,
        no_visibility: cli.no_visibility,
        freeze,
        out: cli.out.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    init_threads()?;
    let cfg = resolve_config(cli)?;
    match cli.command {
        Command::Prefilter => commands::prefilter(&cfg),
        Command::Render => commands::render(&cfg),
        Command::Relight => commands::relight(&cfg),
        Command::Optimize => commands::optimize(&cfg),
        Command::Synthesize => commands::synthesize(&cfg),
        Command::Metrics => commands::metrics(&cfg),
    }
}
