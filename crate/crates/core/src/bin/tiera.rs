use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tiera::data::NoiseSpec;
use tiera::experiment::{self, ExperimentConfig};
use tiera::Error;

#[derive(Parser)]
#[command(
    name = "tiera",
    version,
    about = "Noise-robust joint training experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the noise flip rate.
    #[arg(long)]
    flip_rate: Option<f64>,
    /// Overrides the command's seed (mixture, noise, or master seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output location.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write mixture train/dev/test splits.
    Generate(Common),
    /// Flip training labels and write a flip manifest.
    Corrupt {
        #[command(flatten)]
        common: Common,
        /// Dataset to corrupt; defaults to the config's train_path.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train every seed and write logs, checkpoints and a summary.
    Train(Common),
    /// Score checkpoints on a dataset.
    Evaluate {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        negative_class: Option<usize>,
    },
    /// Train over a grid of hyperparameters and tabulate median F1.
    Sweep(Common),
}

fn load(common: &Common) -> tiera::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => serde_json::from_str("{}")?,
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(rho) = common.flip_rate {
        let seed = cfg.noise.map_or(0, |n| n.seed);
        cfg.noise = Some(NoiseSpec {
            flip_rate: rho,
            seed,
        });
    }
    Ok(cfg)
}

/// Writes to stdout, ignoring a closed pipe (e.g. `tiera train | head`).
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print<T: Serialize>(value: &T) -> tiera::Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"));
    Ok(())
}

fn run(cli: Cli) -> tiera::Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let mut cfg = load(&common)?;
            if let (Some(seed), Some(m)) = (common.seed, cfg.mixture.as_mut()) {
                m.seed = seed;
            }
            print(&experiment::cmd_generate(&cfg)?)
        }
        Command::Corrupt { common, input } => {
            let cfg = load(&common)?;
            let input = input
                .or(cfg.train_path.clone())
                .ok_or_else(|| Error::Validation("corrupt needs --input or train_path".into()))?;
            let mut noise = cfg.noise.ok_or_else(|| {
                Error::Validation("corrupt needs --flip-rate or a noise section".into())
            })?;
            if let Some(seed) = common.seed {
                noise.seed = seed;
            }
            let output = common
                .out
                .filter(|p| p.extension().is_some())
                .unwrap_or_else(|| cfg.out_dir.join("train_noisy.jsonl"));
            let manifest = experiment::cmd_corrupt(&input, &noise, &output)?;
            emit(&format!(
                "{} labels flipped -> {}\n",
                manifest.flips.len(),
                output.display()
            ));
            Ok(())
        }
        Command::Train(common) => {
            let mut cfg = load(&common)?;
            if let Some(seed) = common.seed {
                cfg.train.master_seed = seed;
            }
            print(&experiment::cmd_train(&cfg)?)
        }
        Command::Evaluate {
            checkpoints,
            data,
            negative_class,
        } => print(&experiment::cmd_evaluate(
            &checkpoints,
            &data,
            negative_class,
        )?),
        Command::Sweep(common) => {
            let mut cfg = load(&common)?;
            if let Some(seed) = common.seed {
                cfg.train.master_seed = seed;
            }
            let report = experiment::cmd_sweep(&cfg)?;
            emit(&report.to_csv());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
