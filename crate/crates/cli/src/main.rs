use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use panoiqa_cli::commands::{cmd_eval, cmd_sample, cmd_score, cmd_split, cmd_train, print_json};
use panoiqa_cli::config::RunConfig;

/// No-reference quality scoring for equirectangular 360° images.
#[derive(Debug, Parser)]
#[command(name = "panoiqa", version)]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set sampler.fraction=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for all randomness; wins over the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample viewports from one image and write them as PPM files.
    Sample {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        saliency: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a manifest and write a checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Loss log path (default: `<out>.loss.jsonl`).
        #[arg(long)]
        loss_log: Option<PathBuf>,
    },
    /// Print the quality score of one image.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        saliency: Option<PathBuf>,
        /// Also write per-viewport scores as JSON.
        #[arg(long)]
        per_viewport: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a manifest; prints a JSON report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Also write per-image predictions as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Split a manifest by scene into `train.jsonl` and `test.jsonl`.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Share of scenes assigned to training.
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    match cli.command {
        Command::Sample { image, saliency, out } => {
            let n = cmd_sample(&cfg, &image, saliency.as_deref(), &out)?;
            print_json(&serde_json::json!({ "viewports": n, "out": out }))
        }
        Command::Train {
            manifest,
            out,
            loss_log,
        } => {
            let summary = cmd_train(&cfg, &manifest, &out, loss_log.as_deref())?;
            print_json(&summary)
        }
        Command::Score {
            checkpoint,
            image,
            saliency,
            per_viewport,
        } => {
            let report = cmd_score(&cfg, &checkpoint, &image, saliency.as_deref())?;
            if let Some(p) = per_viewport {
                std::fs::write(&p, serde_json::to_string_pretty(&report)? + "\n")
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            println!("{}", report.score);
            Ok(())
        }
        Command::Eval {
            checkpoint,
            manifest,
            csv,
        } => {
            let report = cmd_eval(&cfg, &checkpoint, &manifest)?;
            if let Some(p) = csv {
                std::fs::write(&p, report.predictions_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
            print_json(&report)
        }
        Command::Split {
            manifest,
            fraction,
            out,
        } => print_json(&cmd_split(&manifest, fraction, cfg.seed, &out)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
