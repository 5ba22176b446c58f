//! `ssinv`: solve, certify, simulate and compare (s, S) inventory policies
//! from a TOML run configuration.
//!
//! Exit codes: 0 success, 1 configuration error, 2 inadmissible model or
//! costs, 3 no minimiser exists, 4 certificate failed, 5 numerical failure.

mod commands;

use clap::{Parser, Subcommand};
use ssinv_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "ssinv", version, about = "Long-run average cost (s, S) inventory control for diffusions")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "ssinv.toml")]
    config: PathBuf,
    /// Output directory (overrides `output` in the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `simulate.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulation.
    #[arg(long, global = true, env = "SSINV_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Find the optimal levels; writes solve.json and f_surface.csv.
    Solve,
    /// Solve, then check the value function against the QVI; writes qvi.json and witnesses.csv.
    Verify,
    /// Simulate a policy (the solved optimum by default); writes simulate.json and histogram.csv.
    Simulate,
    /// Compare optimal (s, S), delayed-trigger and just-in-time policies on the reflected model.
    Compare,
    /// Tabulate g0, zeta and their derivatives to characteristics.csv.
    ExportCharacteristics,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Expr(_) | Error::Io(_) | Error::Csv(_) => 1,
            Error::Model(_) | Error::Costs(_) | Error::Inadmissible(_) | Error::Divergent { .. } | Error::Domain { .. } => 2,
            Error::NoMinimizer(_) => 3,
            Error::Gluing(_) => 4,
            _ => 5,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(1, e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::new(1, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new(1, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<u8, Failure> {
        let src = std::fs::read_to_string(&cli.config)
            .map_err(|e| Failure::new(1, format!("cannot read {}: {e}", cli.config.display())))?;
        let mut cfg = ssinv_core::RunConfig::from_toml(&src)?;
        if let Some(seed) = cli.seed {
            cfg.simulate.seed = seed;
        }
        let out = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out)?;
        let ctx = commands::Context { cfg, out, threads: cli.threads };
        match cli.command {
            Command::Solve => commands::solve(&ctx),
            Command::Verify => commands::verify(&ctx),
            Command::Simulate => commands::simulate(&ctx),
            Command::Compare => commands::compare(&ctx),
            Command::ExportCharacteristics => commands::export_characteristics(&ctx),
        }
    };
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
