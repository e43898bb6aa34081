use std::path::PathBuf;

use kdpp::benchmark::{sweep, SweepConfig, SweepRow};
use kdpp::Points;

use crate::input::{kernel_function, load_file, synthetic, DataFormat, KernelKind};
use crate::report::{kdpp_config, parse_r};
use crate::{single_thread, CliError};

#[derive(clap::Args, Debug, Clone)]
pub struct BenchArgs {
    /// Comma-separated dataset sizes.
    #[arg(long, value_delimiter = ',', default_value = "10000,30000,100000")]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Dataset to subsample; the synthetic mixture is used when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    pub format: DataFormat,
    #[arg(long)]
    pub header: bool,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long, value_enum, default_value_t = KernelKind::Rbf)]
    pub kernel: KernelKind,
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 2.0)]
    pub q_bless: f64,
    #[arg(long, default_value_t = 5.0)]
    pub q_dpp: f64,
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub r: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print each repetition to standard error.
    #[arg(long)]
    pub verbose: bool,
    #[arg(long)]
    pub deterministic: bool,
}

pub fn run_bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.deterministic {
        single_thread();
    }
    let kdpp = kdpp_config(args.q_bless, args.q_dpp, parse_r(&args.r)?)?;
    if args.reps == 0 || args.n_grid.is_empty() || args.k == 0 {
        return Err(CliError::Usage("--reps, --k and --n-grid must be nonempty and positive".into()));
    }
    let kernel = kernel_function::<f64>(args.kernel, args.sigma)?;
    let max_n = args.n_grid.iter().copied().max().unwrap_or(0);
    let points: Points<f64> = match &args.data {
        Some(path) => load_file(path, args.format, args.header)?,
        None => synthetic(max_n, args.data_seed)?,
    };
    if max_n > points.n() {
        return Err(CliError::Usage(format!("--n-grid asks for {max_n} items but the data has {}", points.n())));
    }
    let cfg = SweepConfig {
        n_grid: args.n_grid.clone(),
        reps: args.reps,
        k: args.k,
        kdpp,
        seed: args.seed,
    };
    let verbose = args.verbose;
    let rows = sweep(&points, kernel, &cfg, |m| {
        if verbose {
            eprintln!(
                "n = {} rep {}: {:.3}s, beta = {:.4}, m = {}, alpha_hat = {:.4e}",
                m.n, m.rep, m.runtime_secs, m.beta, m.dictionary_size, m.alpha_hat
            );
        }
    })
    .map_err(CliError::Sampler)?;
    match &args.out {
        Some(path) => write_rows(csv::Writer::from_path(path)?, &rows),
        None => write_rows(csv::Writer::from_writer(std::io::stdout().lock()), &rows),
    }
}

fn write_rows<W: std::io::Write>(mut w: csv::Writer<W>, rows: &[SweepRow]) -> Result<(), CliError> {
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
