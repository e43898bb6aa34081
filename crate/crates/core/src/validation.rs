//! Goodness-of-fit suite that compares every sampler against brute-force
//! enumeration on small random instances.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha_sampler::{AlphaSampler, AlphaSamplerConfig};
use crate::data::Points;
use crate::dictionary::{Dictionary, DictionaryCore};
use crate::dpp_exact::{sample_dpp, sample_kdpp_small};
use crate::driver::{KdppConfig, KdppSampler};
use crate::error::{KdppError, Result};
use crate::kernel::{KernelFunction, KernelSource};
use crate::linalg::{effective_dimension, Matrix};
use crate::oracle::{chi_square_gof, enumerate_dpp, enumerate_kdpp, subset_mask};
use crate::rng::RandomStream;

pub const MAX_SUITE_ITEMS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n: usize,
    pub k: usize,
    pub seeds: usize,
    /// Draws per check and seed.
    pub draws: usize,
    /// The k-DPP pipeline is prepared afresh every this many samples.
    pub refresh: usize,
    /// Per-seed significance level.
    pub level: f64,
    pub base_seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            n: 8,
            k: 2,
            seeds: 10,
            draws: 50_000,
            refresh: 500,
            level: 0.001,
            base_seed: 0,
        }
    }
}

impl SuiteConfig {
    pub fn quick() -> Self {
        Self {
            seeds: 1,
            draws: 20_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n > MAX_SUITE_ITEMS {
            return Err(KdppError::Unsupported(format!(
                "the validation suite enumerates subsets of at most {MAX_SUITE_ITEMS} items, got n = {}",
                self.n
            )));
        }
        if self.n < 3 || self.k == 0 || self.k >= self.n {
            return Err(KdppError::ConfigError(format!(
                "need n >= 3 and 1 <= k < n, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if self.seeds == 0 || self.draws == 0 || self.refresh == 0 {
            return Err(KdppError::ConfigError("seeds, draws and refresh must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(KdppError::ConfigError(format!("level must be in (0, 1), got {}", self.level)));
        }
        Ok(())
    }

    /// Seeds that must pass for a check to pass overall.
    pub fn required_passes(&self) -> usize {
        (self.seeds * 9).div_ceil(10)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub p_values: Vec<f64>,
    pub passes: usize,
    pub required: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.passes >= self.required
    }
}

pub const CHECKS: [&str; 5] = ["exact-dpp", "exact-kdpp", "alpha-dpp-full", "alpha-dpp-sparse", "kdpp-pipeline"];

/// Random RBF instance on `n` Gaussian points in the plane.
pub fn instance(n: usize, seed: u64) -> Result<KernelSource<f64>> {
    let mut rng = RandomStream::new(seed).keyed(0x1257);
    let pts = Points::new(n, 2, (0..2 * n).map(|_| rng.normal()).collect())?;
    KernelSource::from_features(pts, KernelFunction::Rbf { sigma: 0.8 })
}

/// Scale at which `d_eff(alpha L)` equals `target`, by bisection in log scale.
pub fn alpha_for_deff(l: &Matrix<f64>, target: f64) -> Result<f64> {
    let rank_bound = l.rows() as f64;
    if !(target > 0.0 && target < rank_bound) {
        return Err(KdppError::ConfigError(format!("target {target} must lie in (0, {rank_bound})")));
    }
    let (mut lo, mut hi) = (1e-12f64, 1e12f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if effective_dimension(l, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

pub fn check_seed(cfg: &SuiteConfig, name: &str, seed: u64) -> Result<f64> {
    let src = instance(cfg.n, seed)?;
    let l = src.materialize()?;
    let mut rng = RandomStream::new(seed).keyed(0xd155);
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    let mut record = |s: &[usize]| *counts.entry(subset_mask(s)).or_insert(0) += 1;
    let expected = match name {
        "exact-dpp" => {
            for _ in 0..cfg.draws {
                record(&sample_dpp(&l, &mut rng)?);
            }
            enumerate_dpp(&l)?
        }
        "exact-kdpp" => {
            for _ in 0..cfg.draws {
                record(&sample_kdpp_small(&l, cfg.k, &mut rng)?);
            }
            enumerate_kdpp(&l, cfg.k)?
        }
        "alpha-dpp-full" | "alpha-dpp-sparse" => {
            let dict = if name == "alpha-dpp-full" {
                Dictionary::full(cfg.n)
            } else {
                Dictionary::new(vec![0, 1], vec![1.0, 1.0], 1.0, 1.0)?
            };
            let core = DictionaryCore::build(&dict, &src)?;
            let alpha = alpha_for_deff(&l, 2.0f64.min(cfg.n as f64 / 2.0))?;
            let r = effective_dimension(&l, alpha)?.max(1.0);
            let mut sampler = AlphaSampler::new(&src, &core, AlphaSamplerConfig::new(alpha, r))?;
            for _ in 0..cfg.draws {
                record(&sampler.sample(&mut rng)?.0);
            }
            enumerate_dpp(&l.scaled(alpha))?
        }
        "kdpp-pipeline" => {
            let kcfg = KdppConfig::default();
            let mut sampler = KdppSampler::prepare(&src, cfg.k, &kcfg, &mut rng)?;
            for i in 0..cfg.draws {
                if i > 0 && i % cfg.refresh == 0 {
                    sampler = KdppSampler::prepare(&src, cfg.k, &kcfg, &mut rng)?;
                }
                record(&sampler.sample(&mut rng)?.sample);
            }
            enumerate_kdpp(&l, cfg.k)?
        }
        other => return Err(KdppError::ConfigError(format!("unknown check {other}"))),
    };
    Ok(chi_square_gof(&counts, &expected, 5.0)?.p_value)
}

/// Runs every check on `cfg.seeds` instances in parallel. Results do not
/// depend on the thread count.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckOutcome>> {
    cfg.validate()?;
    let jobs: Vec<(&str, u64)> = CHECKS
        .iter()
        .flat_map(|&c| (0..cfg.seeds as u64).map(move |s| (c, s)))
        .collect();
    let p: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, s)| check_seed(cfg, c, cfg.base_seed + s))
        .collect::<Result<_>>()?;
    Ok(CHECKS
        .iter()
        .zip(p.chunks(cfg.seeds))
        .map(|(name, ps)| CheckOutcome {
            name: name.to_string(),
            p_values: ps.to_vec(),
            passes: ps.iter().filter(|&&p| p > cfg.level).count(),
            required: cfg.required_passes(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_large_instances() {
        let cfg = SuiteConfig { n: 20, ..SuiteConfig::quick() };
        assert!(matches!(run_suite(&cfg), Err(KdppError::Unsupported(_))));
    }

    #[test]
    fn alpha_for_deff_hits_the_target() {
        let l = Matrix::from_diag(&[1.0, 2.0, 3.0]);
        let a = alpha_for_deff(&l, 1.5).unwrap();
        let d: f64 = [1.0, 2.0, 3.0].iter().map(|x| a * x / (1.0 + a * x)).sum();
        assert!((d - 1.5).abs() < 1e-9, "{d}");
    }

    #[test]
    fn required_passes_is_nine_in_ten() {
        assert_eq!(SuiteConfig::default().required_passes(), 9);
        assert_eq!(SuiteConfig::quick().required_passes(), 1);
    }

    #[test]
    fn small_suite_reports_every_check() {
        let cfg = SuiteConfig {
            n: 5,
            draws: 5_000,
            seeds: 2,
            ..SuiteConfig::default()
        };
        let out = run_suite(&cfg).unwrap();
        assert_eq!(out.len(), CHECKS.len());
        for c in &out {
            assert!(c.p_values.iter().all(|p| (0.0..=1.0).contains(p)), "{c:?}");
        }
    }
}
