//! Command-line interface.
//!
//! ```text
//! spicorr synth   --out <dir> [--config opts.json]
//! spicorr train   --out <run> --dataset <dir> [--phase a|b|c|all] [--variant v]
//! spicorr eval    --run <run> [--split test]
//! spicorr calibrate --run <run> [--samples 30] [--split test]
//! spicorr outliers  [--run <run>] [--dataset <dir>] [--pool-target 8]
//! spicorr experiment --recipe recipe.json --out <dir>
//! spicorr plot    --report eval.json --out <dir>
//! ```
//!
//! A training run directory holds `checkpoints/`, `reports/phase_*.json`,
//! and `config.lock` (the dataset path plus the exact [`TrainConfig`]).
//! Later phases and eval read the lock, so `--run` is the only handle a
//! downstream command needs.
//!
//! Config files are JSON; any key can be overridden through environment
//! variables prefixed `SPICORR_`, with `__` descending into nested
//! objects (`SPICORR_TEACHER_ARCH__DECODER_HIDDEN=64`).
//!
//! Exit codes: 0 when every declared output was written and validated,
//! 1 for runtime failures, 2 for usage errors.

mod commands;
mod config;
mod experiment;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::synth::{DatasetOptions, Split};
use crate::train::{TrainConfig, VariantName};

pub use commands::{
    checkpoint_path, cmd_calibrate, cmd_eval, cmd_outliers, cmd_plot, cmd_synth, cmd_train,
    load_best_models, report_path, CalibrationOutput, Phase, TrainRequest,
};
pub use config::{apply_env_overrides, guard_outputs, read_lock, write_lock, RunLock, ENV_PREFIX, LOCK_FILE};
pub use experiment::{cmd_experiment, ExperimentReport, Recipe, RecipeName};

#[derive(Debug, Parser)]
#[command(name = "spicorr", version, about = "Probabilistic correspondence models on synthetic anatomy")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Seed override for stochastic steps (defaults to the config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file for the subcommand (synth/train/experiment).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory or file, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace outputs that already exist instead of refusing.
    #[arg(long, global = true)]
    overwrite: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (meshes, volumes, slices, manifest).
    Synth,
    /// Train the teacher and/or student (phases a, b, c).
    Train {
        /// Dataset directory; later phases may omit it and reuse the lock.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "all", value_parser = parse_phase)]
        phase: Phase,
        /// Student input variant, overriding the config.
        #[arg(long, value_parser = parse_variant)]
        variant: Option<VariantName>,
    },
    /// Evaluate a trained run on one split.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Uncertainty calibration report for one split.
    Calibrate {
        #[arg(long)]
        run: PathBuf,
        /// Latent samples drawn per image.
        #[arg(long, default_value_t = 30)]
        samples: usize,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Screen val/test subjects against the training cohort.
    Outliers {
        #[arg(long)]
        run: Option<PathBuf>,
        /// Dataset directory (defaults to the run's lock).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Pooled image grid target per axis.
        #[arg(long, default_value_t = 8)]
        pool_target: usize,
    },
    /// Run a named experiment recipe end to end.
    Experiment {
        /// Recipe JSON (falls back to --config).
        #[arg(long)]
        recipe: Option<PathBuf>,
    },
    /// Render figures (SVG + CSV) from an eval report.
    Plot {
        #[arg(long)]
        report: PathBuf,
    },
}

fn parse_phase(s: &str) -> std::result::Result<Phase, String> {
    match s {
        "a" => Ok(Phase::A),
        "b" => Ok(Phase::B),
        "c" => Ok(Phase::C),
        "all" => Ok(Phase::All),
        other => Err(format!("unknown phase {other:?} (expected a, b, c, or all)")),
    }
}

fn parse_variant(s: &str) -> std::result::Result<VariantName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(format!("unknown split {other:?} (expected train, val, or test)")),
    }
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn require_out(global: &GlobalArgs, what: &str) -> Result<PathBuf> {
    global
        .out
        .clone()
        .ok_or_else(|| Error::Config(format!("{what} needs --out")))
}

fn dispatch(cli: Cli) -> Result<()> {
    let global = &cli.global;
    match cli.command {
        Command::Synth => {
            let out = require_out(global, "synth")?;
            let mut opts: DatasetOptions = config::load(global.config.as_deref())?;
            if let Some(seed) = global.seed {
                opts.seed = seed;
            }
            cmd_synth(&opts, &out, global.overwrite)?;
            Ok(())
        }
        Command::Train { dataset, phase, variant } => {
            let run = require_out(global, "train")?;
            let mut cfg: TrainConfig = config::load(global.config.as_deref())?;
            if let Some(seed) = global.seed {
                cfg.seed = seed;
            }
            if let Some(v) = variant {
                cfg.variant = v;
            }
            cmd_train(&TrainRequest {
                run: &run,
                dataset: dataset.as_deref(),
                cfg,
                phase,
                overwrite: global.overwrite,
            })
        }
        Command::Eval { run, split } => {
            cmd_eval(&run, split, global.out.as_deref(), global.seed, global.overwrite)?;
            Ok(())
        }
        Command::Calibrate { run, samples, split } => {
            cmd_calibrate(&run, samples, split, global.out.as_deref(), global.seed, global.overwrite)?;
            Ok(())
        }
        Command::Outliers { run, dataset, pool_target } => {
            cmd_outliers(
                run.as_deref(),
                dataset.as_deref(),
                pool_target,
                global.out.as_deref(),
                global.overwrite,
            )?;
            Ok(())
        }
        Command::Experiment { recipe } => {
            let path = recipe
                .or_else(|| global.config.clone())
                .ok_or_else(|| Error::Config("experiment needs --recipe".to_string()))?;
            let out = require_out(global, "experiment")?;
            cmd_experiment(&path, &out, global.seed, global.overwrite)?;
            Ok(())
        }
        Command::Plot { report } => {
            let out = require_out(global, "plot")?;
            cmd_plot(&report, &out, global.overwrite)?;
            Ok(())
        }
    }
}
