//! `popbias`: ingest rating data, run feedback-loop simulations and check
//! the resulting metric series.
//!
//! Exit codes: 0 success, 1 other failure (e.g. unwritable output), 2 parse
//! error, 3 invariant violation, 4 simulation aborted, 5 checks failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use popbias_core::recsys::Algorithm;

#[derive(Parser)]
#[command(name = "popbias", version, about = "Popularity-bias feedback-loop experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DatasetArg {
    Movielens,
    Yelp,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, k-core filter and sample a dataset into canonical CSVs.
    Ingest(IngestArgs),
    /// Run the feedback loop for one algorithm.
    Simulate(SimulateArgs),
    /// Check metric series against criteria, or print the scenario table.
    Report(ReportArgs),
    /// Write synthetic MovieLens-format data (ratings.dat, users.dat).
    Synth(SynthArgs),
}

#[derive(clap::Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetArg,
    /// MovieLens: a directory holding ratings.dat and users.dat, or the two
    /// files in that order. Yelp: the reviews JSON-lines file.
    #[arg(long, num_args = 1..=2, required = true)]
    pub input: Vec<PathBuf>,
    /// `user_id,group` CSV (Yelp only; ids are the external user ids).
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k_core: usize,
    #[arg(long, default_value_t = 1000)]
    pub sample_users: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct SimulateArgs {
    /// Output directory of `ingest`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's algorithm.
    #[arg(long, value_parser = parse_algorithm)]
    pub algorithm: Option<Algorithm>,
}

#[derive(clap::Args)]
pub struct ReportArgs {
    /// metrics.csv files, one per algorithm run.
    #[arg(long = "in", num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Criteria TOML; defaults to the built-in dynamic-trend checks.
    #[arg(long)]
    pub check: Option<PathBuf>,
    /// Print the between-group GAP scenario table.
    #[arg(long)]
    pub table3: bool,
}

#[derive(clap::Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    pub users: usize,
    #[arg(long, default_value_t = 400)]
    pub items: usize,
    #[arg(long, default_value_t = 60)]
    pub mean_profile: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: popbias_core::Error| e.to_string())
}

fn init_threads() -> Result<(), commands::Failure> {
    let Ok(raw) = std::env::var("POPBIAS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| commands::Failure::invariant(format!("POPBIAS_THREADS={raw:?} is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| commands::Failure::other(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Ingest(args) => commands::ingest(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Report(args) => commands::report(&args),
        Command::Synth(args) => commands::synth(&args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
