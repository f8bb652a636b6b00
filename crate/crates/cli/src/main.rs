//! Command-line harness for the EEG-to-saliency pipeline.
//!
//! Five subcommands cover the whole workflow: `prepare` turns raw or
//! synthetic recordings into EEG-images and ground-truth maps, `train`
//! runs one training phase, `evaluate` scores the trained generator,
//! `crossvalidate` runs the leave-participants-out protocol, and
//! `report` re-renders stored results. Everything a run produces lands
//! under one output directory, and every command is deterministic under
//! `--seed`.
//!
//! Exit codes: 0 on success, 1 on a runtime fault (training blow-up,
//! failed write), 2 on a usage or input error (bad flags, missing
//! files, malformed data).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use neurosal::config::TrainPhase;
use neurosal::Error;

mod crossval;
mod evaluate;
mod panel;
mod prepare;
mod report;
mod rundir;
mod tables;
mod train;

#[derive(Parser)]
#[command(name = "neurosal", version, about = "EEG-to-visual-saliency translation")]
struct Cli {
    /// Master seed; overrides the config file seed and every phase seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML config file. Flags beat file keys, file keys beat defaults.
    /// Without this flag, commands reuse the run's stored config.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory that receives every output of the workflow.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Suppress progress output; results and warnings still print.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment, filter, and rasterize trials into EEG-images and maps.
    Prepare {
        /// Dataset root holding one directory per participant.
        #[arg(long, conflicts_with = "synthetic")]
        input: Option<PathBuf>,

        /// Generate a seeded synthetic dataset instead of reading one.
        /// Accepts overrides such as `n=5,trials=20,seed=7,fs=500`.
        #[arg(long, value_name = "K=V,...", num_args = 0..=1, default_missing_value = "")]
        synthetic: Option<String>,

        /// Rebuild even when the stored trials are already up to date.
        #[arg(long)]
        force: bool,
    },

    /// Train one phase and write its checkpoint and logs.
    Train {
        #[arg(value_enum)]
        phase: PhaseArg,

        /// Epoch count for this phase.
        #[arg(long)]
        epochs: Option<usize>,

        /// Learning rate for this phase.
        #[arg(long)]
        lr: Option<f64>,

        /// Minibatch size for this phase.
        #[arg(long)]
        batch_size: Option<usize>,

        /// Train the generator on content and KL alone, no critic.
        #[arg(long)]
        no_adversarial: bool,
    },

    /// Score the trained generator and render comparison panels.
    Evaluate {
        /// Rows in the ground-truth-vs-prediction panel.
        #[arg(long)]
        trials: Option<usize>,
    },

    /// Leave-participants-out cross-validation, one run per fold.
    Crossvalidate {
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },

    /// Re-render reports from the metrics already stored in the run.
    Report,
}

/// Train phase as spelled on the command line.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum PhaseArg {
    VaeSaliency,
    VaeEeg,
    Gan,
}

impl PhaseArg {
    fn to_phase(self) -> TrainPhase {
        match self {
            PhaseArg::VaeSaliency => TrainPhase::SaliencyVae,
            PhaseArg::VaeEeg => TrainPhase::EegVae,
            PhaseArg::Gan => TrainPhase::Gan,
        }
    }
}

/// Faults the caller can fix (bad flags, missing or malformed inputs)
/// exit 2; faults inside a running pipeline exit 1.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Training(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = rundir::Context {
        run: rundir::RunDir::new(cli.out),
        config_path: cli.config,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Prepare {
            input,
            synthetic,
            force,
        } => prepare::run(&ctx, input.as_deref(), synthetic.as_deref(), force),
        Command::Train {
            phase,
            epochs,
            lr,
            batch_size,
            no_adversarial,
        } => train::run(
            &ctx,
            phase.to_phase(),
            train::Overrides {
                epochs,
                lr,
                batch_size,
                no_adversarial,
            },
        ),
        Command::Evaluate { trials } => evaluate::run(&ctx, trials),
        Command::Crossvalidate { folds } => crossval::run(&ctx, folds),
        Command::Report => report::run(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
