mod bench;
mod input;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use kdpp::validation::{run_suite, SuiteConfig, MAX_SUITE_ITEMS};
use kdpp::KdppError;

use crate::bench::{run_bench, BenchArgs};
use crate::input::{DataFormat, KernelKind};
use crate::report::{run_sample, OutputFormat};

#[derive(Parser, Debug)]
#[command(name = "kdpp", version, about = "Exact k-DPP sampling in time sublinear in the number of items")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw k-DPP samples from a dataset.
    Sample(SampleArgs),
    /// Runtime and observed-fraction sweep over dataset sizes.
    Bench(BenchArgs),
    /// Goodness-of-fit suite against brute-force enumeration.
    Validate(ValidateArgs),
}

#[derive(clap::Args, Debug, Clone)]
pub struct SampleArgs {
    /// Input file (one item per row).
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub data: Option<std::path::PathBuf>,
    /// Use `N` points from the seeded Gaussian mixture instead of a file.
    #[arg(long, value_name = "N")]
    pub synthetic: Option<usize>,
    /// Seed of the synthetic generator.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    pub format: DataFormat,
    /// The CSV file starts with a header row.
    #[arg(long)]
    pub header: bool,
    #[arg(long, value_enum, default_value_t = KernelKind::Rbf)]
    pub kernel: KernelKind,
    /// RBF bandwidth.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 2.0)]
    pub q_bless: f64,
    /// Oversampling of the final dictionary.
    #[arg(long, default_value_t = 2.0)]
    pub q_dpp: f64,
    /// Intensity multiplier of the intermediate sample, or `auto`.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub r: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub output: OutputFormat,
    /// Single-threaded run; wall times are left out of the output.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(clap::Args, Debug)]
struct ValidateArgs {
    /// One seed with fewer draws.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    deterministic: bool,
}

pub enum CliError {
    Usage(String),
    Ingestion(KdppError),
    Sampler(KdppError),
    ValidationFailed,
    Output(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.into())
    }
}

fn single_thread() {
    // fails only if the global pool already exists
    let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
}

fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    if args.n > MAX_SUITE_ITEMS {
        return Err(CliError::Usage(format!(
            "unsupported: --n {} exceeds the enumeration limit of {MAX_SUITE_ITEMS}",
            args.n
        )));
    }
    if args.deterministic {
        single_thread();
    }
    let mut cfg = if args.quick { SuiteConfig::quick() } else { SuiteConfig::default() };
    cfg.n = args.n;
    cfg.k = args.k;
    if let Some(s) = args.seeds {
        cfg.seeds = s;
    }
    if let Some(d) = args.draws {
        cfg.draws = d;
    }
    if let Err(e) = cfg.validate() {
        return Err(CliError::Usage(e.to_string()));
    }
    let outcomes = run_suite(&cfg).map_err(CliError::Sampler)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "n = {}, k = {}, {} seeds x {} draws, level {}", cfg.n, cfg.k, cfg.seeds, cfg.draws, cfg.level)?;
    let mut ok = true;
    for c in &outcomes {
        let min_p = c.p_values.iter().copied().fold(f64::INFINITY, f64::min);
        writeln!(
            out,
            "{} {:<18} {}/{} seeds pass (need {}), min p = {:.4}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.passes,
            c.p_values.len(),
            c.required,
            min_p
        )?;
        ok &= c.passed();
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::ValidationFailed)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sample(args) => run_sample(args),
        Command::Bench(args) => run_bench(args),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => Cli::command().error(clap::error::ErrorKind::ValueValidation, msg).exit(),
        Err(CliError::Ingestion(e)) => {
            eprintln!("error: failed to load input: {e}");
            ExitCode::from(3)
        }
        Err(CliError::Sampler(e)) => {
            eprintln!("error: sampler failed: {e}");
            println!("{}", report::error_json(&e));
            ExitCode::from(4)
        }
        Err(CliError::ValidationFailed) => {
            eprintln!("error: validation suite failed");
            ExitCode::from(4)
        }
        Err(CliError::Output(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
