//! `curvlab`: batch front end for the curvature laboratory.
//!
//! Exit codes: 0 when every check passes, 2 when a check fails, 3 for bad
//! configuration or unmet preconditions.

mod commands;
mod config;

use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use commands::{Outcome, PinchingAction, Source};
use config::{Common, RunConfig};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Lab(#[from] curvlab::LabError),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "curvlab",
    version,
    about = "Reproducible checks of curvature cones under Hamilton's ODE"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Randomized checks of the tensor identities and the coupled system
    Identities,
    /// Cone membership of one tensor
    Membership {
        #[command(flatten)]
        source: Source,
    },
    /// Model spaces with their boundary audits
    Catalog {
        /// One model (default: all defined in dimension n)
        model: Option<String>,
    },
    /// Integrate the ODE from one tensor
    Evolve {
        #[command(flatten)]
        source: Source,
        /// Integrate the scale-normalized flow
        #[arg(long)]
        normalize: bool,
    },
    /// Probe invariance of a cone under the ODE
    Invariance,
    /// Check that the flow points into a cone at its boundary
    Transversality,
    /// Estimate θ̂(n) and validate it
    ThetaBar,
    /// Build, evaluate or verify the pinching function
    Pinching {
        #[command(subcommand)]
        action: PinchingAction,
    },
    /// Audit the neck cutoff against the pinching function
    Surgery {
        /// `standard`, or `cosine:DELTA` for w = 1 + DELTA cos z
        #[arg(long, default_value = "standard")]
        profile: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Identities => "identities",
            Command::Membership { .. } => "membership",
            Command::Catalog { .. } => "catalog",
            Command::Evolve { .. } => "evolve",
            Command::Invariance => "invariance",
            Command::Transversality => "transversality",
            Command::ThetaBar => "theta-bar",
            Command::Pinching {
                action: PinchingAction::Build { .. },
            } => "pinching build",
            Command::Pinching {
                action: PinchingAction::Eval { .. },
            } => "pinching eval",
            Command::Pinching {
                action: PinchingAction::Verify { .. },
            } => "pinching verify",
            Command::Surgery { .. } => "surgery",
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    command: &'a str,
    config: &'a RunConfig,
    pass: bool,
    /// Seconds since the Unix epoch; the only field that varies between replays.
    timestamp: u64,
    report: &'a Value,
}

fn dispatch(cfg: &RunConfig, command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Identities => commands::identities(cfg),
        Command::Membership { source } => commands::membership(cfg, source),
        Command::Catalog { model } => commands::catalog(cfg, model.as_deref()),
        Command::Evolve { source, normalize } => commands::evolve(cfg, source, *normalize),
        Command::Invariance => commands::invariance(cfg),
        Command::Transversality => commands::transversality(cfg),
        Command::ThetaBar => commands::theta_bar(cfg),
        Command::Pinching { action } => commands::pinching(cfg, action),
        Command::Surgery { profile } => commands::surgery(cfg, profile),
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let cfg = RunConfig::new(cli.command.name(), cli.common)?;
    if let Some(threads) = cfg.flags.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let outcome = dispatch(&cfg, &cli.command)?;
    for line in &outcome.lines {
        println!("{line}");
    }
    if let Some(path) = cfg.csv_path() {
        let csv = outcome
            .csv
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("{} has no CSV output", cfg.command)))?;
        std::fs::write(path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = cfg.json_path() {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let envelope = Envelope {
            schema_version: SCHEMA_VERSION,
            command: &cfg.command,
            config: &cfg,
            pass: outcome.pass,
            timestamp,
            report: &outcome.report,
        };
        let text = serde_json::to_string_pretty(&envelope).expect("reports serialize");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    println!("{}", if outcome.pass { "PASS" } else { "FAIL" });
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("curvlab: {e}");
            ExitCode::from(3)
        }
    }
}
