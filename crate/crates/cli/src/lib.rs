//! Command-line front end: CSV ingestion, JSON configuration, and reports
//! with an embedded run manifest.

pub mod commands;
pub mod config;
pub mod input;
pub mod manifest;
pub mod report;

use std::ffi::OsString;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{
    cmd_analyze, cmd_convergence, cmd_simulate, AnalyzeArgs, ConvergenceArgs, SimulateArgs,
};
pub use input::IngestError;
pub use manifest::RunManifest;
pub use report::Report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ALL_FAILED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Output(String),
    #[error("every estimator failed: {0}")]
    AllFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::AllFailed(_) => EXIT_ALL_FAILED,
            _ => EXIT_USAGE,
        }
    }
}

/// Environment inputs, captured once so commands stay pure.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Env {
    pub ab_seed: Option<String>,
    pub source_date_epoch: Option<String>,
}

impl Env {
    pub fn from_process() -> Self {
        Self {
            ab_seed: std::env::var("AB_SEED").ok(),
            source_date_epoch: std::env::var("SOURCE_DATE_EPOCH").ok(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "abvr",
    version,
    about = "Variance-reduced A/B test analysis and simulation"
)]
pub struct Cli {
    /// Worker threads for replication studies (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare every estimator on one experiment CSV.
    Analyze(AnalyzeArgs),
    /// Power, Type I error and coverage over a scenario grid.
    Simulate(SimulateArgs),
    /// Plot data for estimator convergence and scaled variance estimates.
    Convergence(ConvergenceArgs),
}

pub fn execute(cli: &Cli, env: &Env) -> Result<(), CliError> {
    let go = || match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, env),
        Command::Simulate(a) => cmd_simulate(a, env),
        Command::Convergence(a) => cmd_convergence(a, env),
    };
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// Parses arguments, runs, prints diagnostics to stderr, returns the exit code.
pub fn main_with<I, T>(args: I, env: &Env) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, env) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("abvr: {e}");
            e.exit_code()
        }
    }
}
