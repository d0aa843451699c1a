mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Mode;
use config::RunConfig;

/// Adaptive daily-living monitoring: scenario generation, simulation and
/// reporting, reproducible from a single config file and seed.
#[derive(Parser)]
#[command(name = "admon", version, about)]
struct Cli {
    /// JSON config file; defaults to $ADMON_CONFIG, then built-in defaults.
    #[arg(long, global = true, env = "ADMON_CONFIG")]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a year-long scenario and its ground-truth anomaly log.
    Generate,
    /// Replay a scenario through the monitor.
    Run {
        /// Which monitor(s) to run.
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        /// Scenario file; defaults to <out_dir>/scenario.csv.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Emit figure-ready CSV series and a summary from a completed run.
    Report {
        /// Run directory; defaults to the config's out_dir.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Write the built-in catalog, matrices, sensor parameters and config.
    Defaults,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("admon: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    match cli.command {
        Command::Generate => commands::cmd_generate(&cfg, cli.quiet),
        Command::Run { mode, scenario } => {
            commands::cmd_run(&cfg, mode, scenario.as_deref(), cli.quiet)
        }
        Command::Report { run } => {
            let run_dir = run.unwrap_or_else(|| cfg.out_dir.clone());
            commands::cmd_report(&run_dir, cli.out.as_deref(), cli.quiet)
        }
        Command::Defaults => commands::cmd_defaults(&cfg.out_dir, cli.quiet),
    }
}
