use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fol_cli::commands;
use fol_cli::RunConfig;

#[derive(Parser)]
#[command(name = "fol", version, about = "Finite operator learning for heterogeneous elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed (and the trainer seeds).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a sample set and manifest.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// FEM reference solutions (CSV + VTK) for every sample.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Sample CSV (default: <out>/samples.csv).
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Train a physics-driven FOL surrogate.
    TrainFol {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Continue from a checkpoint up to the configured epoch count.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the data-driven DeepONet baseline.
    TrainDeeponet {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compare a trained model against FEM on test inputs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sample CSV of test inputs.
        #[arg(long)]
        inputs: PathBuf,
    },
    /// VTK export of sample modulus fields.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
    },
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring threads")?;
    }
    let cfg = RunConfig::load(&common.config)?.with_overrides(common.seed, common.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let path = commands::generate(&load(&common)?)?;
            println!("{}", path.display());
        }
        Command::Solve { common, samples } => {
            let cfg = load(&common)?;
            let samples = samples.unwrap_or_else(|| commands::default_samples_path(&cfg));
            let ok = commands::solve(&cfg, &samples)?;
            println!("solved {ok} samples");
        }
        Command::TrainFol { common, samples, resume } => {
            let cfg = load(&common)?;
            let samples = samples.unwrap_or_else(|| commands::default_samples_path(&cfg));
            println!("{}", commands::train_fol(&cfg, &samples, resume.as_deref())?.display());
        }
        Command::TrainDeeponet { common, samples, resume } => {
            let cfg = load(&common)?;
            let samples = samples.unwrap_or_else(|| commands::default_samples_path(&cfg));
            println!("{}", commands::train_deeponet(&cfg, &samples, resume.as_deref())?.display());
        }
        Command::Evaluate { common, checkpoint, inputs } => {
            let cfg = load(&common)?;
            println!("{}", commands::evaluate(&cfg, &checkpoint, &inputs)?.display());
        }
        Command::Export { common, samples } => {
            let cfg = load(&common)?;
            let samples = samples.unwrap_or_else(|| commands::default_samples_path(&cfg));
            println!("exported {} fields", commands::export(&cfg, &samples)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
