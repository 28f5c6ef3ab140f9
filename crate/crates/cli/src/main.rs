use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use animalia_cli::config::ExperimentConfig;
use animalia_cli::runner;

/// Simulation toolkit for spatial birth-and-death processes of lattice
/// animals in quenched random environments.
#[derive(Parser)]
#[command(name = "animalia", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the replica count.
    #[arg(long, global = true)]
    replicas: Option<u32>,

    /// Override the worker count (never changes results).
    #[arg(long, global = true)]
    workers: Option<u32>,

    /// Override the output directory (default: config, then $ANIMALIA_OUT,
    /// then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute whatever command the config file specifies.
    Run,
    /// Exact samples of the invariant measure.
    Sample,
    /// Clan tail table for a space-time point.
    ClanStats,
    /// Connectivity-function estimates over a distance grid.
    Connectivity,
    /// Regularity verdicts for sites.
    Regularity,
    /// Parameter feasibility and the scaled-sequence report.
    Multiscale,
    /// Disorder diagnostics and hypothesis report.
    DisorderCheck,
}

impl Command {
    fn expected_name(&self) -> Option<&'static str> {
        match self {
            Command::Run => None,
            Command::Sample => Some("sample"),
            Command::ClanStats => Some("clan-stats"),
            Command::Connectivity => Some("connectivity"),
            Command::Regularity => Some("regularity"),
            Command::Multiscale => Some("multiscale"),
            Command::DisorderCheck => Some("disorder-check"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // machine-readable error on stderr
            let payload = serde_json::json!({ "error": e.to_string() });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(name) = cli.command.expected_name() {
        if config.command.name() != name {
            anyhow::bail!(
                "config file specifies command '{}', not '{name}'; use `animalia run` or fix the config",
                config.command.name()
            );
        }
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(replicas) = cli.replicas {
        config.replicas = replicas;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    let output = runner::run(&config)?;
    for artifact in &output.artifacts {
        println!("{}", artifact.display());
    }
    Ok(())
}
