//! Command-line front end for the drawdown-stop solver: solve threshold
//! curves, export value surfaces, run the simulation oracle, decompose
//! regimes, and verify scale-function identities, all driven by one JSON
//! configuration.

mod commands;
mod config;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "drawdown-stop",
    about = "Optimal stopping of a drawdown with a ruin threshold",
    version
)]
struct Cli {
    /// JSON configuration file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for data files (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Override the simulation seed from the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimal threshold curve and export it.
    Solve,
    /// Export the value surface over the configured grid.
    Surface,
    /// Compare closed forms against the pathwise simulation oracle.
    Simulate,
    /// Decompose the solve range into strategy regimes.
    Regimes,
    /// Verify the scale function against its Laplace transform.
    ScaleCheck,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }

    if cli.dump_config {
        println!("{}", cfg.to_pretty_json());
        return Ok(());
    }

    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }

    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;

    match cli.command {
        Command::Solve => commands::cmd_solve(&cfg, &cli.out),
        Command::Surface => commands::cmd_surface(&cfg, &cli.out),
        Command::Simulate => commands::cmd_simulate(&cfg, &cli.out),
        Command::Regimes => commands::cmd_regimes(&cfg, &cli.out),
        Command::ScaleCheck => commands::cmd_scale_check(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    // Die quietly when the downstream pipe closes (e.g. `... | head`)
    // instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
