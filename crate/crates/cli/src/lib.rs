//! Command-line front end for synclab experiments.
//!
//! Every command reads a JSON config, writes its CSV/JSON/SVG outputs into the
//! output directory and records a `manifest.json` that can be passed back as
//! `--config` to replay the run.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod output;
pub mod svg;

#[derive(Debug, Parser)]
#[command(name = "synclab", version, about = "Master-slave synchronization experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run config (or a manifest from an earlier run)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for parallel sections
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterate a map (or sample a flow) from one initial point
    Orbit,
    /// Integrate a flow with fixed-step RK4
    Integrate,
    /// Finite-horizon synchronization trial
    SyncTest,
    /// Conditional Lyapunov exponent of the response
    Lyapunov,
    /// Linear synchronizability report, structure search, density experiment
    Linsync,
    /// Boundary twist conditions and types (P)/(Q) on invariant annuli
    Annulus,
    /// Fixed-point certificates of non-synchronization
    Certify,
    /// Certificates under seeded C⁰ perturbations
    PerturbSweep,
    /// SVG line plot of CSV columns
    Plot(commands::PlotArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Orbit => "orbit",
            Command::Integrate => "integrate",
            Command::SyncTest => "sync-test",
            Command::Lyapunov => "lyapunov",
            Command::Linsync => "linsync",
            Command::Annulus => "annulus",
            Command::Certify => "certify",
            Command::PerturbSweep => "perturb-sweep",
            Command::Plot(_) => "plot",
        }
    }
}

/// How a run failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid config or input: exit 2.
    Config(String),
    /// A trajectory left the finite range: exit 3 (partial output kept).
    Diverged(String),
    /// Anything else (I/O, internal): exit 1.
    Other(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Diverged(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid input: {m}"),
            Failure::Diverged(m) => write!(f, "diverged: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<synclab_core::Error> for Failure {
    fn from(e: synclab_core::Error) -> Self {
        use synclab_core::Error as E;
        match e {
            E::Diverged { .. } => Failure::Diverged(e.to_string()),
            E::NotFound(_) => Failure::Other(e.into()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let name = cli.command.name();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("synclab {name}: could not configure threads: {e}");
        }
    }
    let start = Instant::now();
    match commands::dispatch(&cli, start) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("synclab {name}: {f}");
            f.exit_code()
        }
    }
}
