//! `latent-align`: generate, modify, preprocess, train, evaluate, ablate, plot.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_align::data::ScenarioKind;
use latent_align::model::Preset;
use latent_align::Error;

#[derive(Debug, Parser)]
#[command(name = "latent-align", version, about = "Align two longitudinal instruments in a joint latent space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic cohort.
    Generate {
        /// Generator settings (TOML or JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the subscale instrument if needed and apply a modification.
    Scenario {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<ScenarioKind>,
        /// Scenario settings (TOML or JSON); `--kind` and `--seed` take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Item indices of R forming S when the input has no S.
        #[arg(long, value_delimiter = ',')]
        subscale: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Outlier removal, series filters and rescale-then-logit.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, or resume from `--checkpoint`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Alignment metrics, summary and scatter plot of a checkpoint.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = latent_align::eval::DEFAULT_TIME_TOLERANCE)]
        tolerance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the four loss variants with otherwise identical settings.
    Ablation {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        /// Patients drawn for trajectory panels.
        #[arg(long, default_value_t = 12)]
        panels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trajectory panels for selected patients.
    Plot {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        patients: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Overrides layered over the preset (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// 2: configuration or usage; 3: data and files; 4: numerics.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Precondition(_) | Error::Lookup(_) => 2,
        Error::Parse { .. } | Error::Validation(_) | Error::Io { .. } => 3,
        Error::Numeric { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { config, seed, out } => commands::generate(config.as_deref(), seed, &out),
        Command::Scenario {
            input,
            kind,
            config,
            seed,
            subscale,
            out,
        } => commands::scenario(&input, kind, config.as_deref(), seed, subscale.as_deref(), &out),
        Command::Preprocess { input, config, out } => commands::preprocess(&input, config.as_deref(), &out),
        Command::Train {
            data,
            train,
            checkpoint,
            out,
        } => commands::train(&data, &train.into(), checkpoint.as_deref(), &out),
        Command::Evaluate {
            data,
            checkpoint,
            tolerance,
            out,
        } => commands::evaluate(&data, &checkpoint, tolerance, &out),
        Command::Ablation {
            data,
            train,
            panels,
            out,
        } => commands::ablation(&data, &train.into(), panels, &out),
        Command::Plot {
            data,
            checkpoint,
            patients,
            out,
        } => commands::plot(&data, &checkpoint, &patients, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

impl From<TrainArgs> for commands::TrainOptions {
    fn from(a: TrainArgs) -> Self {
        Self {
            preset: a.preset,
            config: a.config,
            seed: a.seed,
            epochs: a.epochs,
        }
    }
}
