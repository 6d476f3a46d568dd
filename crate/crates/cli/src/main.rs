//! `dualq-seld`: scene synthesis, training, evaluation, structure reports
//! and gradient self-checks.

mod commands;
mod failure;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use failure::Failure;

#[derive(Parser)]
#[command(
    name = "dualq-seld",
    version,
    about = "Dual-quaternion SELD networks for two ambisonic microphones"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command that reads a run configuration.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON file of flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.lr=0.001`. Repeatable.
    #[arg(long = "set", value_parser = settings::parse_assignment)]
    sets: Vec<(String, Value)>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-microphone dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_samples: Option<usize>,
        /// Scene length in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_class: Option<usize>,
        #[arg(long)]
        max_overlap: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a model; writes checkpoint, history and report into `--out`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// real, quaternion, dualq or dualq_parallel.
        #[arg(long)]
        kind: Option<String>,
        /// paper, desk or quaternion_wide.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sed_threshold: Option<f64>,
        /// Meters.
        #[arg(long)]
        dist_threshold: Option<f64>,
        /// greedy or hungarian.
        #[arg(long)]
        matching: Option<String>,
        /// Score the ground truth against itself instead of the model.
        #[arg(long)]
        oracle: bool,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Report layers, parameter counts, dilations and receptive field.
    Params {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Finite-difference check of every layer kind at f64.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        /// Scale the input gradient of the named case by 1.1.
        #[arg(long)]
        corrupt: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth {
            out,
            n_samples,
            duration,
            seed,
            n_class,
            max_overlap,
            cfg,
        } => {
            let mut layers = settings::Layers::new(cfg.config.as_deref(), &cfg.sets)?;
            layers.push("synth.n_samples", n_samples.map(Value::from));
            layers.push("synth.seed", seed.map(Value::from));
            layers.push("scene.duration", duration.map(Value::from));
            layers.push("scene.n_class", n_class.map(Value::from));
            layers.push("scene.max_overlap", max_overlap.map(Value::from));
            commands::synth(&out, &layers)
        }
        Command::Train {
            data,
            out,
            kind,
            preset,
            seed,
            epochs,
            lr,
            quiet,
            cfg,
        } => {
            let mut layers = settings::Layers::new(cfg.config.as_deref(), &cfg.sets)?;
            layers.push("model.kind", kind.map(Value::from));
            layers.push("model.preset", preset.map(Value::from));
            layers.push("train.seed", seed.map(Value::from));
            layers.push("train.max_epochs", epochs.map(Value::from));
            layers.push("train.lr", lr.map(Value::from));
            commands::train(&data, &out, &layers, quiet)
        }
        Command::Eval {
            data,
            ckpt,
            sed_threshold,
            dist_threshold,
            matching,
            oracle,
            out,
            cfg,
        } => {
            let mut layers = settings::Layers::new(cfg.config.as_deref(), &cfg.sets)?;
            layers.push("metric.sed_threshold", sed_threshold.map(Value::from));
            layers.push("metric.dist_threshold", dist_threshold.map(Value::from));
            layers.push("metric.matching", matching.map(Value::from));
            commands::eval(&data, &ckpt, &layers, oracle, out.as_deref())
        }
        Command::Params {
            kind,
            preset,
            out,
            cfg,
        } => {
            let mut layers = settings::Layers::new(cfg.config.as_deref(), &cfg.sets)?;
            layers.push("model.kind", kind.map(Value::from));
            layers.push("model.preset", preset.map(Value::from));
            commands::params(&layers, out.as_deref())
        }
        Command::Gradcheck {
            seed,
            corrupt,
            out,
            cfg,
        } => {
            let mut layers = settings::Layers::new(cfg.config.as_deref(), &cfg.sets)?;
            layers.push("gradcheck.seed", seed.map(Value::from));
            layers.push("gradcheck.corrupt", corrupt.map(Value::from));
            commands::gradcheck(&layers, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
