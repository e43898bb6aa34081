use std::io::Write;
use std::time::Instant;

use clap::ValueEnum;
use kdpp::driver::KdppTimings;
use kdpp::{FinalOversampling, KdppConfig, KdppError, KdppResult, KdppSampler, KernelSource, Points, RChoice, RandomStream, Scalar};
use serde::Serialize;

use crate::input::{kernel_source, load_file, synthetic, DataFormat, KernelKind};
use crate::{single_thread, CliError, Precision, SampleArgs};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub data: Option<String>,
    pub synthetic: Option<usize>,
    pub data_seed: u64,
    pub format: DataFormat,
    pub header: bool,
    pub kernel: KernelKind,
    pub sigma: f64,
    pub k: usize,
    pub q_bless: f64,
    pub q_dpp: f64,
    pub r: String,
    pub seed: u64,
    pub samples: usize,
    pub deterministic: bool,
    pub precision: Precision,
    pub n: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub sample_index: usize,
    pub config: ConfigEcho,
    pub sample: Vec<usize>,
    pub alpha_hat: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub low_confidence: bool,
    pub r: f64,
    pub beta: f64,
    pub dictionary_size: usize,
    pub deff_hat: f64,
    pub search_steps: usize,
    pub oracle_calls: usize,
    pub size_rejections: u64,
    pub iterations: u64,
    pub accepted: u64,
    /// Absent in deterministic mode.
    pub timings: Option<KdppTimings>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Aggregate {
    pub samples: usize,
    pub beta: f64,
    pub mean_size_rejections: f64,
    pub mean_iterations: f64,
    pub acceptance_rate: f64,
    pub bless_secs: Option<f64>,
    pub search_secs: Option<f64>,
    pub mean_sampling_secs: Option<f64>,
    pub total_secs: Option<f64>,
}

#[derive(Serialize)]
struct Document<'a> {
    schema_version: u32,
    reports: &'a [RunReport],
    aggregate: &'a Aggregate,
}

#[derive(Serialize)]
struct CsvRow {
    sample_index: String,
    n: usize,
    k: usize,
    alpha_hat: f64,
    r: f64,
    beta: f64,
    dictionary_size: usize,
    deff_hat: f64,
    oracle_calls: usize,
    size_rejections: f64,
    iterations: f64,
    bless_secs: Option<f64>,
    search_secs: Option<f64>,
    sampling_secs: Option<f64>,
    sample: String,
}

pub fn error_json(e: &KdppError) -> String {
    let trace = match e {
        KdppError::BudgetExhausted { trace: Some(t), .. } => serde_json::to_value(t).unwrap_or(serde_json::Value::Null),
        _ => serde_json::Value::Null,
    };
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "error": e.to_string(),
        "trace": trace,
    })
    .to_string()
}

pub fn parse_r(s: &str) -> Result<RChoice, CliError> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(RChoice::Auto);
    }
    match s.parse::<f64>() {
        Ok(r) if r.is_finite() && r > 0.0 => Ok(RChoice::Fixed(r)),
        _ => Err(CliError::Usage(format!("--r must be a positive number or `auto`, got `{s}`"))),
    }
}

pub fn kdpp_config(q_bless: f64, q_dpp: f64, r: RChoice) -> Result<KdppConfig, CliError> {
    for (flag, q) in [("--q-bless", q_bless), ("--q-dpp", q_dpp)] {
        if !(q.is_finite() && q > 0.0) {
            return Err(CliError::Usage(format!("{flag} must be positive, got {q}")));
        }
    }
    let mut cfg = KdppConfig { r, ..KdppConfig::default() };
    cfg.bless.q = q_bless;
    cfg.bless.q_final = FinalOversampling::Fixed(q_dpp);
    Ok(cfg)
}

pub fn run_sample(args: &SampleArgs) -> Result<(), CliError> {
    if args.deterministic {
        single_thread();
    }
    match args.precision {
        Precision::F64 => sample_with::<f64>(args),
        Precision::F32 => sample_with::<f32>(args),
    }
}

fn sample_with<T: Scalar>(args: &SampleArgs) -> Result<(), CliError> {
    let cfg = kdpp_config(args.q_bless, args.q_dpp, parse_r(&args.r)?)?;
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let points: Points<T> = match (&args.data, args.synthetic) {
        (Some(path), _) => load_file(path, args.format, args.header)?,
        (None, Some(n)) => synthetic(n, args.data_seed)?,
        (None, None) => return Err(CliError::Usage("one of --data or --synthetic is required".into())),
    };
    let echo = ConfigEcho {
        data: args.data.as_ref().map(|p| p.display().to_string()),
        synthetic: args.synthetic,
        data_seed: args.data_seed,
        format: args.format,
        header: args.header,
        kernel: args.kernel,
        sigma: args.sigma,
        k: args.k,
        q_bless: args.q_bless,
        q_dpp: args.q_dpp,
        r: args.r.clone(),
        seed: args.seed,
        samples: args.samples,
        deterministic: args.deterministic,
        precision: args.precision,
        n: points.n(),
        dim: points.dim(),
    };
    let src: KernelSource<T> = kernel_source(points, args.kernel, args.sigma)?;

    let clock = Instant::now();
    let mut rng = RandomStream::new(args.seed);
    let mut sampler = KdppSampler::prepare(&src, args.k, &cfg, &mut rng).map_err(CliError::Sampler)?;
    let mut results: Vec<KdppResult> = Vec::with_capacity(args.samples);
    for _ in 0..args.samples {
        results.push(sampler.sample(&mut rng).map_err(CliError::Sampler)?);
    }
    let total_secs = clock.elapsed().as_secs_f64();

    let timed = !args.deterministic;
    let reports: Vec<RunReport> = results
        .iter()
        .enumerate()
        .map(|(i, res)| RunReport {
            schema_version: SCHEMA_VERSION,
            sample_index: i,
            config: echo.clone(),
            sample: res.sample.clone(),
            alpha_hat: res.alpha_hat,
            alpha_min: res.alpha_min,
            alpha_max: res.alpha_max,
            low_confidence: res.low_confidence,
            r: res.r,
            beta: res.beta,
            dictionary_size: res.dictionary_size,
            deff_hat: res.deff_hat,
            search_steps: res.search_steps,
            oracle_calls: res.oracle_calls,
            size_rejections: res.size_rejections,
            iterations: res.trace.iterations,
            accepted: res.trace.accepted,
            timings: timed.then(|| res.timings.clone()),
        })
        .collect();
    let aggregate = aggregate(&results, timed.then_some(total_secs));

    let mut out = std::io::stdout().lock();
    match args.output {
        OutputFormat::Json => {
            let doc = Document {
                schema_version: SCHEMA_VERSION,
                reports: &reports,
                aggregate: &aggregate,
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &reports {
                w.serialize(CsvRow {
                    sample_index: r.sample_index.to_string(),
                    n: r.config.n,
                    k: r.config.k,
                    alpha_hat: r.alpha_hat,
                    r: r.r,
                    beta: r.beta,
                    dictionary_size: r.dictionary_size,
                    deff_hat: r.deff_hat,
                    oracle_calls: r.oracle_calls,
                    size_rejections: r.size_rejections as f64,
                    iterations: r.iterations as f64,
                    bless_secs: r.timings.as_ref().map(|t| t.bless_secs),
                    search_secs: r.timings.as_ref().map(|t| t.search_secs),
                    sampling_secs: r.timings.as_ref().map(|t| t.sampling_secs),
                    sample: join(&r.sample),
                })?;
            }
            let last = reports.last();
            w.serialize(CsvRow {
                sample_index: "aggregate".into(),
                n: echo.n,
                k: echo.k,
                alpha_hat: last.map_or(f64::NAN, |r| r.alpha_hat),
                r: last.map_or(f64::NAN, |r| r.r),
                beta: aggregate.beta,
                dictionary_size: last.map_or(0, |r| r.dictionary_size),
                deff_hat: last.map_or(f64::NAN, |r| r.deff_hat),
                oracle_calls: last.map_or(0, |r| r.oracle_calls),
                size_rejections: aggregate.mean_size_rejections,
                iterations: aggregate.mean_iterations,
                bless_secs: aggregate.bless_secs,
                search_secs: aggregate.search_secs,
                sampling_secs: aggregate.mean_sampling_secs,
                sample: String::new(),
            })?;
            w.flush()?;
        }
    }
    Ok(())
}

fn join(items: &[usize]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

fn aggregate(results: &[KdppResult], total_secs: Option<f64>) -> Aggregate {
    let m = results.len().max(1) as f64;
    let iterations: u64 = results.iter().map(|r| r.trace.iterations).sum();
    let accepted: u64 = results.iter().map(|r| r.trace.accepted).sum();
    let timed = total_secs.is_some();
    let first = results.first().map(|r| &r.timings);
    Aggregate {
        samples: results.len(),
        beta: results.last().map_or(0.0, |r| r.beta),
        mean_size_rejections: results.iter().map(|r| r.size_rejections as f64).sum::<f64>() / m,
        mean_iterations: iterations as f64 / m,
        acceptance_rate: if iterations == 0 { 0.0 } else { accepted as f64 / iterations as f64 },
        bless_secs: first.filter(|_| timed).map(|t| t.bless_secs),
        search_secs: first.filter(|_| timed).map(|t| t.search_secs),
        mean_sampling_secs: timed.then(|| results.iter().map(|r| r.timings.sampling_secs).sum::<f64>() / m),
        total_secs,
    }
}
