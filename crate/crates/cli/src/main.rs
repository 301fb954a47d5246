//! `evdkit`: run, time and verify the two-stage tridiagonalization pipeline.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evdkit::Distribution;

use crate::report::Format;

#[derive(Parser, Debug)]
#[command(name = "evdkit", version, about = "Two-stage symmetric eigensolver benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Dense to tridiagonal through a band.
    Tridiag,
    /// Tridiagonalize, then compute eigenvalues.
    Evd,
    /// Recursive vs naive rank-2k update over an (n, k) grid.
    #[command(name = "syr2k-bench")]
    Syr2kBench,
    /// Time every (bandwidth, blocksize) pair and pick the fastest.
    Tune,
    /// Run the invariant suite.
    Verify,
    /// Write a generated matrix as SYMF.
    Gen,
}

#[derive(Args, Debug, Clone)]
pub struct Options {
    /// Matrix size; comma-separated for syr2k-bench and verify.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Bandwidth b; comma-separated for tune.
    #[arg(long, global = true, value_delimiter = ',')]
    pub bandwidth: Vec<usize>,
    /// Block size nb; comma-separated for tune and syr2k-bench.
    #[arg(long, global = true, value_delimiter = ',')]
    pub blocksize: Vec<usize>,
    /// Inner dimensions for syr2k-bench.
    #[arg(long, global = true, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, global = true, env = "EVDKIT_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "gaussian", value_parser = parse_dist)]
    pub dist: Distribution,
    /// SYMF file to use instead of a generated matrix.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// TRID output (tridiag, evd) or SYMF output (gen).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    /// Accumulate Q and check the similarity residual.
    #[arg(long, global = true)]
    pub verify: bool,
    /// evd: compare eigenvalues against dense Jacobi (n <= 512). tridiag:
    /// also run the one-stage reduction and compare spectra.
    #[arg(long, global = true)]
    pub oracle: bool,
    #[arg(long, global = true)]
    pub flat_panel_updates: bool,
    #[arg(long, global = true)]
    pub serial_chase: bool,
    #[arg(long, global = true)]
    pub accumulate_q: bool,
}

fn parse_dist(s: &str) -> Result<Distribution, String> {
    s.parse().map_err(|e: evdkit::Error| e.to_string())
}

/// Why a command stopped early; maps onto the exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Verification(_) => 4,
        }
    }
}

impl From<evdkit::Error> for Failure {
    fn from(e: evdkit::Error) -> Self {
        match e {
            evdkit::Error::Io(_) | evdkit::Error::Format { .. } => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers =
        cli.opts.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let result = if workers == 0 {
        Err(Failure::Config("--workers must be at least 1".into()))
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(|| run(cli.command, &cli.opts, workers)),
            Err(e) => Err(Failure::Config(format!("cannot start {workers} threads: {e}"))),
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("configuration error", m),
                Failure::Io(m) => ("I/O error", m),
                Failure::Verification(m) => ("verification failed", m),
            };
            eprintln!("evdkit: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command, opts: &Options, workers: usize) -> Result<(), Failure> {
    match command {
        Command::Tridiag => commands::tridiag(opts, workers),
        Command::Evd => commands::evd(opts, workers),
        Command::Syr2kBench => commands::syr2k_bench(opts, workers),
        Command::Tune => commands::tune(opts, workers),
        Command::Verify => commands::verify(opts, workers),
        Command::Gen => commands::gen(opts),
    }
}
