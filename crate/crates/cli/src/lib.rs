//! Command-line front end: dataset synthesis, two-stage training, evaluation,
//! IDR export and the distillation ablation, all driven by one JSON config.

pub mod commands;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "kdsr",
    version,
    about = "Blind x4 super-resolution with distilled degradation representations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    /// Degrade HR images into an HR/LR dataset with degradations.csv
    Synth,
    /// Stage 1: teacher estimator and SR network
    TrainTeacher,
    /// Stage 2: student estimator distilled from the teacher
    TrainStudent,
    /// Gaussian8 sweep, anisotropic grid and IDR separability
    Eval,
    /// Write per-image degradation vectors as CSV
    ExportIdr,
    /// Compare KD losses and the no-KD arm over several seeds
    Ablate,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed applied to every section
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override `section.key=value` (value parsed as JSON when possible)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: `<runs_dir>/<timestamp>-<name>`)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    Synth(CommonArgs),
    TrainTeacher(CommonArgs),
    TrainStudent(CommonArgs),
    Eval(CommonArgs),
    ExportIdr(CommonArgs),
    Ablate(CommonArgs),
}

impl Command {
    fn split(&self) -> (CommandKind, &CommonArgs) {
        match self {
            Command::Synth(a) => (CommandKind::Synth, a),
            Command::TrainTeacher(a) => (CommandKind::TrainTeacher, a),
            Command::TrainStudent(a) => (CommandKind::TrainStudent, a),
            Command::Eval(a) => (CommandKind::Eval, a),
            Command::ExportIdr(a) => (CommandKind::ExportIdr, a),
            Command::Ablate(a) => (CommandKind::Ablate, a),
        }
    }
}

fn default_out(cfg: &RunConfig) -> PathBuf {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    cfg.runs_dir.join(format!("{stamp}-{}", cfg.name))
}

/// Runs one command with an already resolved configuration, writing every
/// artifact under `out`.
pub fn execute(kind: CommandKind, cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let resolved = serde_json::to_string_pretty(cfg)?;
    fs::write(out.join(commands::RESOLVED_CONFIG_FILE), &resolved)?;
    eprintln!("resolved configuration:\n{resolved}");
    match kind {
        CommandKind::Synth => commands::synth(cfg, out),
        CommandKind::TrainTeacher => commands::train_teacher(cfg, out),
        CommandKind::TrainStudent => commands::train_student(cfg, out),
        CommandKind::Eval => commands::eval(cfg, out),
        CommandKind::ExportIdr => commands::export_idr(cfg, out),
        CommandKind::Ablate => commands::ablate(cfg, out),
    }
}

/// Caps the data-parallel worker count from `KDSR_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("KDSR_THREADS") {
        let n: usize = raw
            .parse()
            .with_context(|| format!("KDSR_THREADS must be a positive integer, got `{raw}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let (kind, args) = cli.command.split();
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.overrides, args.seed)?;
    let out = args.out.clone().unwrap_or_else(|| default_out(&cfg));
    execute(kind, &cfg, &out)?;
    eprintln!("outputs in {}", out.display());
    Ok(())
}
