//! `spongelab` — config-driven energy-latency attack experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sponge_lab::config::{load_config, Task};
use sponge_lab::experiments;

#[derive(Parser)]
#[command(
    name = "spongelab",
    about = "Desk-scale laboratory for energy-latency (sponge) attacks on toy inference pipelines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Start the mock translation service from a config file (task fields
    /// other than [service] and [translator] are ignored).
    Serve(RunArgs),
    /// Write the built-in vocabulary to a file.
    ExportVocab {
        /// Destination path.
        path: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Patch a config value by dotted path, e.g. `ga.pool_size=100`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = load_config(
                &args.config,
                &args.overrides,
                args.seed,
                args.out.as_deref(),
            )?;
            let summary = experiments::run(&config)?;
            for line in &summary.headline {
                println!("{line}");
            }
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            Ok(())
        }
        Command::Serve(args) => {
            let mut config = load_config(
                &args.config,
                &args.overrides,
                args.seed,
                args.out.as_deref(),
            )?;
            config.task = Task::Serve;
            experiments::run(&config)?;
            Ok(())
        }
        Command::ExportVocab { path } => {
            sponge_lab::formats::write_default_vocab(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}
