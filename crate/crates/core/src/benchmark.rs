//! Runtime and observed-fraction sweeps over growing prefixes of a dataset.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Points;
use crate::driver::{KdppConfig, KdppSampler};
use crate::error::{KdppError, Result};
use crate::kernel::{KernelFunction, KernelSource};
use crate::rng::RandomStream;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub k: usize,
    pub kdpp: KdppConfig,
    pub seed: u64,
}

/// One repetition: a fresh pipeline and a single sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepMeasurement {
    pub n: usize,
    pub rep: usize,
    pub runtime_secs: f64,
    pub beta: f64,
    pub dictionary_size: usize,
    pub alpha_hat: f64,
    pub iterations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub mean_runtime: f64,
    /// Half-width of the Student-t 95% interval of the mean runtime.
    pub ci95: f64,
    pub beta: f64,
    pub m: f64,
    pub alpha_hat: f64,
}

pub fn ci95_half_width(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    t * (var / n as f64).sqrt()
}

pub fn summarize(n: usize, reps: &[RepMeasurement]) -> SweepRow {
    let m = reps.len().max(1) as f64;
    let runtimes: Vec<f64> = reps.iter().map(|r| r.runtime_secs).collect();
    SweepRow {
        n,
        mean_runtime: runtimes.iter().sum::<f64>() / m,
        ci95: ci95_half_width(&runtimes),
        beta: reps.iter().map(|r| r.beta).sum::<f64>() / m,
        m: reps.iter().map(|r| r.dictionary_size as f64).sum::<f64>() / m,
        alpha_hat: reps.iter().map(|r| r.alpha_hat).sum::<f64>() / m,
    }
}

/// Times `prepare` plus one draw on the first `n` points. Kernel
/// construction is not timed.
pub fn measure<T: Scalar>(
    points: &Points<T>,
    kernel: KernelFunction<T>,
    n: usize,
    rep: usize,
    cfg: &SweepConfig,
) -> Result<RepMeasurement> {
    let src = KernelSource::from_features(points.truncated(n), kernel)?;
    let mut rng = RandomStream::new(cfg.seed).keyed(n as u64).keyed(rep as u64);
    let clock = Instant::now();
    let mut sampler = KdppSampler::prepare(&src, cfg.k, &cfg.kdpp, &mut rng)?;
    let res = sampler.sample(&mut rng)?;
    let runtime_secs = clock.elapsed().as_secs_f64();
    Ok(RepMeasurement {
        n,
        rep,
        runtime_secs,
        beta: res.beta,
        dictionary_size: res.dictionary_size,
        alpha_hat: res.alpha_hat,
        iterations: res.trace.iterations,
    })
}

/// Repetitions run one after another so that timings do not compete for
/// cores.
pub fn sweep<T: Scalar>(
    points: &Points<T>,
    kernel: KernelFunction<T>,
    cfg: &SweepConfig,
    mut on_rep: impl FnMut(&RepMeasurement),
) -> Result<Vec<SweepRow>> {
    if cfg.reps == 0 || cfg.n_grid.is_empty() {
        return Err(KdppError::ConfigError("need at least one grid point and one repetition".into()));
    }
    if let Some(&n) = cfg.n_grid.iter().find(|&&n| n > points.n() || n < cfg.k) {
        return Err(KdppError::ConfigError(format!(
            "grid size {n} must lie in [k, {}] = [{}, {}]",
            points.n(),
            cfg.k,
            points.n()
        )));
    }
    cfg.n_grid
        .iter()
        .map(|&n| {
            let reps = (0..cfg.reps)
                .map(|rep| {
                    let m = measure(points, kernel, n, rep, cfg)?;
                    on_rep(&m);
                    Ok(m)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(n, &reps))
        })
        .collect()
}
