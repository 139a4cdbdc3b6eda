//! Command-line front end: reads call quotes and a run config, runs the
//! pricing, hedging and simulation pipeline, and writes JSON and CSV reports.

pub mod commands;
pub mod config;
pub mod input;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use robust_lookback::Error;

pub use config::RunConfig;
pub use input::MarketInput;

pub const EXIT_IO: u8 = 1;
pub const EXIT_ARBITRAGE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_TRUNCATED: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "lookback",
    version,
    about = "Robust bounds and hedges for lookback and one-touch options"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Market data JSON.
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Run config JSON; defaults apply when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Print the primary payload to stdout instead of writing files.
    #[arg(long, global = true)]
    pub stdout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the quotes for static arbitrage.
    Validate,
    /// Robust upper bound of the configured payoff.
    Price,
    /// Barrier profile `m, zeta_1..zeta_n, C`.
    Profile,
    /// Static positions `λ_i` and the dynamic trading rule.
    HedgeTable,
    /// Monte Carlo of the iterated embedding.
    Simulate,
    /// One-marginal value of a built-in `g(x, m)`.
    OneMarginal,
}

/// Error carrying its process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::io(e.to_string())
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvexQuotes { .. } | Error::MeanMismatch { .. } | Error::ConvexOrderViolation { .. } => {
            EXIT_ARBITRAGE
        }
        Error::DegenerateBoundary { .. }
        | Error::BarrierOutOfRange { .. }
        | Error::AtBarrier { .. }
        | Error::UnorderedZeta
        | Error::ZetaAboveBarrier { .. }
        | Error::CapExceedsProfile { .. } => EXIT_SOLVER,
        Error::TooManyTruncated { .. } | Error::Truncated { .. } => EXIT_TRUNCATED,
        _ => EXIT_IO,
    }
}

/// One output file. The primary one goes to stdout under `--stdout`.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: &'static str,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Exit code reported after the artifacts are written.
    pub code: u8,
    pub message: Option<String>,
}

impl Outcome {
    pub fn ok(artifacts: Vec<Artifact>) -> Self {
        Self {
            artifacts,
            code: 0,
            message: None,
        }
    }
}

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_IO } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            if let Err(e) = emit(&cli, &outcome) {
                eprintln!("error: {}", e.message);
                return e.code;
            }
            if let Some(m) = &outcome.message {
                eprintln!("{m}");
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Runs the command, inside a sized thread pool when `--threads` is given.
pub fn execute(cli: &Cli) -> Result<Outcome, Failure> {
    match cli.threads {
        Some(0) => Err(Failure::io("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::io(e.to_string()))?
            .install(|| commands::run(cli)),
        None => commands::run(cli),
    }
}

fn emit(cli: &Cli, outcome: &Outcome) -> Result<(), Failure> {
    if cli.stdout {
        if let Some(primary) = outcome.artifacts.first() {
            let mut out = io::stdout().lock();
            out.write_all(primary.body.as_bytes())?;
            out.flush()?;
        }
        return Ok(());
    }
    write_artifacts(&cli.out, &outcome.artifacts)
}

fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
    for a in artifacts {
        let path = dir.join(a.name);
        fs::write(&path, &a.body).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
