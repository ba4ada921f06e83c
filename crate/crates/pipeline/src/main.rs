use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use f2f_pipeline::commands::{self, Context};
use f2f_pipeline::config::RunConfig;
use f2f_pipeline::{reenact, Error};

#[derive(Parser)]
#[command(name = "f2f", version, about = "Model-based face capture and reenactment on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Frames to generate (synth) or to process (other stages).
    #[arg(long)]
    frames: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic source and target sequences with ground truth.
    Synth(Common),
    /// Select keyframes and estimate identity, albedo and intrinsics.
    Calibrate(Common),
    /// Track the target sequence and build the mouth database.
    BuildMouthDb(Common),
    /// Track expression, pose and light over every frame.
    Track(Common),
    /// Drive the target actor with the source expressions.
    Reenact(Common),
    /// Compare tracked parameters with ground truth and report metrics.
    Eval(Common),
}

fn run(cli: Cli) -> Result<(), Error> {
    let (Command::Synth(c)
    | Command::Calibrate(c)
    | Command::BuildMouthDb(c)
    | Command::Track(c)
    | Command::Reenact(c)
    | Command::Eval(c)) = &cli.command;
    let cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = cfg.with_overrides(c.seed, c.frames, c.out.clone())?;
    let ctx = Context::new(cfg)?;
    match cli.command {
        Command::Synth(_) => commands::cmd_synth(&ctx),
        Command::Calibrate(_) => commands::cmd_calibrate(&ctx),
        Command::BuildMouthDb(_) => commands::cmd_build_mouth_db(&ctx).map(|_| ()),
        Command::Track(_) => commands::cmd_track(&ctx),
        Command::Reenact(_) => reenact::cmd_reenact(&ctx).map(|s| println!("{}", serde_json::to_string(&s).unwrap_or_default())),
        Command::Eval(_) => commands::cmd_eval(&ctx).map(|r| println!("{}", serde_json::to_string_pretty(&r).unwrap_or_default())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = std::env::var("F2F_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not cap threads at {n}: {e}");
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
