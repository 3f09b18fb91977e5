//! `pinnbeam` — experiment harness for the beam surrogate models:
//! synthetic sensor data, temporal and spatial training runs, natural-
//! frequency identification, and SVG/text reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 training divergence, 1 anything else.

mod commands;
mod config;
mod plot;

use clap::{Args, Parser, Subcommand};
use commands::ExitHint;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pinnbeam", version, about = "Beam surrogate-model experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (datasets are read from and written to it).
    #[arg(long)]
    out: PathBuf,
    /// Override every seed in the config with this value.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic sensor datasets (time series + fiber scans).
    Synth {
        #[command(flatten)]
        common: Common,
        /// Override both noise levels [microstrain]; 0 gives noise-free data.
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Train the temporal strain surrogate (or the data-only baseline).
    TrainTemporal {
        #[command(flatten)]
        common: Common,
        /// Train the sin-activation data-only baseline instead.
        #[arg(long)]
        baseline: bool,
        /// Fan out over seeds 0..N and write per-seed subdirectories.
        #[arg(long, conflicts_with = "seed")]
        seeds: Option<u64>,
    },
    /// Identify the squared natural frequency from the measured window.
    IdentifyOmega {
        #[command(flatten)]
        common: Common,
    },
    /// Train the spatial section surrogate on fiber data.
    TrainSpatial {
        #[command(flatten)]
        common: Common,
        /// Data variant: 1 compression only, 2 both fibers, 3 tension
        /// down-weighted. Overrides the config's `spatial_train.scenario`.
        #[arg(long)]
        scenario: Option<u8>,
        /// Leave the rigid-motion null space free (no vertical pin, no
        /// rotation penalty).
        #[arg(long)]
        no_null_space_pinning: bool,
        /// Fan out over seeds 0..N and write per-seed subdirectories.
        #[arg(long, conflicts_with = "seed")]
        seeds: Option<u64>,
    },
    /// Summarize finished runs into a table and overlay SVG plots.
    Report {
        /// Output directory for the report artifacts.
        #[arg(long)]
        out: PathBuf,
        /// Run directories produced by the train/identify commands.
        run_dirs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { common, noise_sigma } => {
            let ctx = commands::prepare(
                common.config.as_deref(),
                &common.out,
                common.seed,
                noise_sigma,
            )?;
            commands::cmd_synth(&ctx)
        }
        Command::TrainTemporal {
            common,
            baseline,
            seeds,
        } => {
            let ctx =
                commands::prepare(common.config.as_deref(), &common.out, common.seed, None)?;
            commands::cmd_train_temporal(&ctx, baseline, seeds)
        }
        Command::IdentifyOmega { common } => {
            let ctx =
                commands::prepare(common.config.as_deref(), &common.out, common.seed, None)?;
            commands::cmd_identify(&ctx)
        }
        Command::TrainSpatial {
            common,
            scenario,
            no_null_space_pinning,
            seeds,
        } => {
            let ctx =
                commands::prepare(common.config.as_deref(), &common.out, common.seed, None)?;
            let idx = scenario
                .or(ctx.cfg.spatial_train.scenario)
                .ok_or_else(|| {
                    anyhow::anyhow!("no scenario selected: pass --scenario 1|2|3 or set spatial_train.scenario")
                        .context(ExitHint(2))
                })?;
            commands::cmd_train_spatial(&ctx, idx, no_null_space_pinning, seeds)
        }
        Command::Report { out, run_dirs } => commands::cmd_report(&out, &run_dirs),
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    // `anyhow::Error::downcast_ref` searches both context values and
    // source errors through the whole chain; per-cause downcasts would
    // miss context objects, which anyhow stores in opaque wrappers.
    if let Some(hint) = err.downcast_ref::<ExitHint>() {
        return hint.0;
    }
    if let Some(e) = err.downcast_ref::<pinnbeam::Error>() {
        return match e {
            pinnbeam::Error::Divergence(_) => 4,
            pinnbeam::Error::Parse { .. } | pinnbeam::Error::Validation(_) => 3,
            pinnbeam::Error::Usage(_) => 2,
            _ => 1,
        };
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
