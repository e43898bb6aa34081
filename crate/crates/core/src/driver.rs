//! Exact k-DPP sampling: bracket the scale with BLESS-I, binary-search a
//! scale `alpha_hat` at which size `k` is reasonably likely, then draw
//! `DPP(alpha_hat L)` samples until one has exactly `k` items.
//!
//! Conditioning `DPP(alpha L)` on `|S| = k` gives `k-DPP(L)` for every
//! `alpha > 0`, so the scale only affects the cost.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alpha_sampler::{AlphaSampler, AlphaSamplerConfig, Backend, SampleTrace};
use crate::bless::{bless_i, BlessConfig, BlessOutput, SearchInterval};
use crate::dictionary::{DictionaryCore, MarginalCache};
use crate::error::{KdppError, Result};
use crate::kernel::KernelSource;
use crate::poisson_binomial::branching_threshold;
use crate::rng::RandomStream;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySearchConfig {
    /// Mode-probability constant, in `(0, 1)`.
    pub c: f64,
    /// Multiplier of the per-step sample count.
    pub big_c: f64,
    pub delta: f64,
    /// Overrides the step budget `ceil(log2(alpha_max / alpha_min))`.
    pub max_steps: Option<usize>,
}

impl Default for BinarySearchConfig {
    fn default() -> Self {
        Self {
            c: 0.25,
            big_c: 4.0,
            delta: 0.1,
            max_steps: None,
        }
    }
}

impl BinarySearchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(KdppError::ConfigError(format!("c must lie in (0, 1), got {}", self.c)));
        }
        if !(self.big_c >= 1.0 && self.big_c.is_finite()) {
            return Err(KdppError::ConfigError(format!("C must be at least 1, got {}", self.big_c)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(KdppError::ConfigError(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    /// Samples drawn at step `s` (1-based): `ceil(C sqrt(k) ln(s / delta))`.
    pub fn samples_at_step(&self, k: usize, s: usize) -> usize {
        let t = self.big_c * (k as f64).sqrt() * (s as f64 / self.delta).ln();
        (t.ceil() as usize).max(1)
    }

    /// Step budget `ceil(log2 gamma)`.
    pub fn step_budget(&self, gamma: f64) -> usize {
        self.max_steps.unwrap_or_else(|| gamma.log2().ceil().max(0.0) as usize)
    }

    /// Upper bound on oracle calls: `budget * ceil(C sqrt(k) ln(budget / delta))`.
    pub fn call_bound(&self, k: usize, gamma: f64) -> usize {
        let steps = self.step_budget(gamma);
        if steps == 0 {
            return 0;
        }
        steps * self.samples_at_step(k, steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub alpha: f64,
    pub samples: usize,
    pub p_k: f64,
    pub p_below: f64,
    pub p_above: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub alpha_hat: f64,
    pub oracle_calls: usize,
    pub steps: Vec<SearchStep>,
    /// The step budget ran out without a confident exit; `alpha_hat` is the
    /// final lower end of the interval.
    pub low_confidence: bool,
}

/// Binary search in log scale for a scale at which `|S| = k` has
/// probability `Omega(1 / sqrt(k))`. `oracle(alpha)` returns the size of a
/// `DPP(alpha L)` sample.
pub fn binary_search_alpha<F>(mut oracle: F, interval: &SearchInterval, k: usize, cfg: &BinarySearchConfig) -> Result<SearchOutcome>
where
    F: FnMut(f64) -> Result<usize>,
{
    cfg.validate()?;
    let (mut lo, mut hi) = (interval.alpha_min, interval.alpha_max);
    if !(lo > 0.0 && lo <= hi) {
        return Err(KdppError::InvalidInput(format!("invalid interval [{lo}, {hi}]")));
    }
    let budget = cfg.step_budget(hi / lo);
    let tight = 1.0 + 1.0 / ((k as f64 + 3.0) * (k as f64 + 3.0));
    let accept_at = 0.5 * branching_threshold(k, cfg.c);
    let mut out = SearchOutcome {
        alpha_hat: lo,
        oracle_calls: 0,
        steps: Vec::new(),
        low_confidence: false,
    };
    for s in 1..=budget {
        if hi / lo < tight {
            out.alpha_hat = lo;
            return Ok(out);
        }
        let mid = (lo * hi).sqrt();
        let t = cfg.samples_at_step(k, s);
        let (mut at, mut below, mut above) = (0usize, 0usize, 0usize);
        for _ in 0..t {
            let size = oracle(mid)?;
            match size.cmp(&k) {
                std::cmp::Ordering::Equal => at += 1,
                std::cmp::Ordering::Less => below += 1,
                std::cmp::Ordering::Greater => above += 1,
            }
        }
        out.oracle_calls += t;
        let tf = t as f64;
        out.steps.push(SearchStep {
            alpha: mid,
            samples: t,
            p_k: at as f64 / tf,
            p_below: below as f64 / tf,
            p_above: above as f64 / tf,
        });
        if at as f64 / tf >= accept_at {
            out.alpha_hat = mid;
            return Ok(out);
        }
        if below > above {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.alpha_hat = lo;
    out.low_confidence = hi / lo >= tight;
    Ok(out)
}

/// How `r` is chosen for the rescaled sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum RChoice {
    /// `max(1, d_hat)` at the smallest BLESS-I level at or above `alpha`.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdppConfig {
    pub bless: BlessConfig,
    pub search: BinarySearchConfig,
    pub r: RChoice,
    pub max_rejections: usize,
    pub r_doubling: bool,
    pub backend: Backend,
    /// Draws at `alpha_hat` without a size-`k` sample before giving up.
    pub size_patience: usize,
}

impl Default for KdppConfig {
    fn default() -> Self {
        Self {
            bless: BlessConfig::default(),
            search: BinarySearchConfig::default(),
            r: RChoice::Auto,
            max_rejections: 64,
            r_doubling: true,
            backend: Backend::Uniform,
            size_patience: 10_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KdppTimings {
    pub bless_secs: f64,
    pub search_secs: f64,
    pub sampling_secs: f64,
}

/// One k-DPP sample with the statistics of the run that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdppResult {
    pub sample: Vec<usize>,
    pub alpha_hat: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub search_steps: usize,
    pub oracle_calls: usize,
    pub low_confidence: bool,
    pub size_rejections: u64,
    pub dictionary_size: usize,
    pub deff_hat: f64,
    pub r: f64,
    /// Fraction of items whose marginal was computed so far, across all phases.
    pub beta: f64,
    pub trace: SampleTrace,
    pub timings: KdppTimings,
}

/// Prepared pipeline: dictionary, interval and `alpha_hat` are computed
/// once; every call to [`KdppSampler::sample`] is an independent exact draw.
pub struct KdppSampler<'a, T: Scalar> {
    src: &'a KernelSource<T>,
    k: usize,
    cfg: KdppConfig,
    bless: Option<BlessOutput<T>>,
    core: Option<DictionaryCore<T>>,
    cache: MarginalCache<T>,
    search: SearchOutcome,
    interval: SearchInterval,
    r: f64,
    timings: KdppTimings,
    search_trace: SampleTrace,
}

impl<'a, T: Scalar> KdppSampler<'a, T> {
    pub fn prepare(src: &'a KernelSource<T>, k: usize, cfg: &KdppConfig, rng: &mut RandomStream) -> Result<Self> {
        let n = src.n();
        if k == 0 || k > n {
            return Err(KdppError::InfeasibleSize {
                k,
                reason: format!("need 1 <= k <= n = {n}"),
            });
        }
        cfg.search.validate()?;
        let mut timings = KdppTimings::default();
        if k == n {
            // the only subset of size n
            let interval = SearchInterval::new(1.0, 1.0)?;
            return Ok(Self {
                src,
                k,
                cfg: cfg.clone(),
                bless: None,
                core: None,
                cache: MarginalCache::new(),
                search: SearchOutcome {
                    alpha_hat: 1.0,
                    oracle_calls: 0,
                    steps: Vec::new(),
                    low_confidence: false,
                },
                interval,
                r: 1.0,
                timings,
                search_trace: SampleTrace::default(),
            });
        }

        let clock = Instant::now();
        let bless = bless_i(src, k, &cfg.bless, rng)?;
        let core = DictionaryCore::build(&bless.dictionary, src)?;
        timings.bless_secs = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let interval = bless.interval.clone();
        let mut cache = MarginalCache::new();
        let mut search_trace = SampleTrace {
            n,
            ..SampleTrace::default()
        };
        let search = {
            let mut oracle = |alpha: f64| -> Result<usize> {
                let acfg = alpha_config(cfg, &interval, alpha);
                let mut sampler = AlphaSampler::with_cache(src, &core, acfg, std::mem::take(&mut cache))?;
                let res = sampler.sample(rng);
                cache = sampler.into_cache();
                let (s, trace) = res?;
                search_trace.absorb(&trace);
                Ok(s.len())
            };
            binary_search_alpha(&mut oracle, &interval, k, &cfg.search)?
        };
        timings.search_secs = clock.elapsed().as_secs_f64();
        let r = alpha_config::<T>(cfg, &interval, search.alpha_hat).r.f64();
        Ok(Self {
            src,
            k,
            cfg: cfg.clone(),
            bless: Some(bless),
            core: Some(core),
            cache,
            search,
            interval,
            r,
            timings,
            search_trace,
        })
    }

    pub fn alpha_hat(&self) -> f64 {
        self.search.alpha_hat
    }

    pub fn interval(&self) -> &SearchInterval {
        &self.interval
    }

    pub fn search(&self) -> &SearchOutcome {
        &self.search
    }

    pub fn bless_output(&self) -> Option<&BlessOutput<T>> {
        self.bless.as_ref()
    }

    /// Distinct items whose marginal has been computed by any phase.
    pub fn observed_count(&self) -> usize {
        match &self.bless {
            Some(b) => {
                let extra = self.cache.observed().iter().filter(|i| !b.observed.contains(i)).count();
                b.observed.len() + extra
            }
            None => 0,
        }
    }

    pub fn observed_items(&self) -> HashSet<usize> {
        let mut out: HashSet<usize> = self.cache.observed().clone();
        if let Some(b) = &self.bless {
            out.extend(b.observed.iter().copied());
        }
        out
    }

    pub fn beta(&self) -> f64 {
        self.observed_count() as f64 / self.src.n() as f64
    }

    /// One exact `k-DPP(L)` draw.
    pub fn sample(&mut self, rng: &mut RandomStream) -> Result<KdppResult> {
        let clock = Instant::now();
        let n = self.src.n();
        let mut trace = SampleTrace {
            n,
            ..SampleTrace::default()
        };
        let mut rejections = 0u64;
        let sample = match &self.core {
            None => (0..n).collect(),
            Some(core) => {
                let acfg = alpha_config(&self.cfg, &self.interval, self.search.alpha_hat);
                let mut sampler = AlphaSampler::with_cache(self.src, core, acfg, std::mem::take(&mut self.cache))?;
                let mut all_below = true;
                let outcome = loop {
                    if rejections as usize >= self.cfg.size_patience {
                        // only a kernel found to be low rank is called infeasible;
                        // otherwise the interval may just end too early
                        break Err(if all_below && self.interval.saturated {
                            KdppError::InfeasibleSize {
                                k: self.k,
                                reason: format!(
                                    "{rejections} draws at alpha = {} all had fewer items and the kernel is numerically low rank",
                                    self.search.alpha_hat
                                ),
                            }
                        } else if all_below {
                            KdppError::BudgetExhausted {
                                reason: format!(
                                    "{rejections} draws at alpha = {} all had fewer than {} items; a larger BLESS-I q widens the interval",
                                    self.search.alpha_hat, self.k
                                ),
                                trace: Some(Box::new(trace.clone())),
                            }
                        } else {
                            KdppError::BudgetExhausted {
                                reason: format!("{rejections} draws without a size-{} sample", self.k),
                                trace: Some(Box::new(trace.clone())),
                            }
                        });
                    }
                    match sampler.sample(rng) {
                        Ok((s, t)) => {
                            trace.absorb(&t);
                            if s.len() == self.k {
                                break Ok(s);
                            }
                            all_below &= s.len() < self.k;
                            rejections += 1;
                        }
                        Err(e) => break Err(e),
                    }
                };
                self.cache = sampler.into_cache();
                outcome?
            }
        };
        self.timings.sampling_secs = clock.elapsed().as_secs_f64();
        let beta = self.beta();
        trace.observed_items = self.observed_count();
        trace.beta = beta;
        Ok(KdppResult {
            sample,
            alpha_hat: self.search.alpha_hat,
            alpha_min: self.interval.alpha_min,
            alpha_max: self.interval.alpha_max,
            search_steps: self.search.steps.len(),
            oracle_calls: self.search.oracle_calls,
            low_confidence: self.search.low_confidence,
            size_rejections: rejections,
            dictionary_size: self.bless.as_ref().map_or(0, |b| b.dictionary.len()),
            deff_hat: self
                .interval
                .deff_by_level
                .last()
                .map_or(self.k as f64, |l| l.deff_hat),
            r: self.r,
            beta,
            trace,
            timings: self.timings.clone(),
        })
    }

    /// Statistics of the oracle draws made by the binary search.
    pub fn search_trace(&self) -> &SampleTrace {
        &self.search_trace
    }
}

fn alpha_config<T: Scalar>(cfg: &KdppConfig, interval: &SearchInterval, alpha: f64) -> AlphaSamplerConfig<T> {
    let r = match cfg.r {
        RChoice::Fixed(r) => r,
        RChoice::Auto => interval.deff_at(alpha).unwrap_or(1.0).max(1.0),
    };
    let mut acfg = AlphaSamplerConfig::new(T::of(alpha), T::of(r)).with_backend(cfg.backend);
    acfg.max_rejections = cfg.max_rejections;
    acfg.r_doubling = cfg.r_doubling;
    acfg
}

/// Full pipeline for a single sample.
pub fn sample_kdpp<T: Scalar>(src: &KernelSource<T>, k: usize, cfg: &KdppConfig, rng: &mut RandomStream) -> Result<KdppResult> {
    let mut sampler = KdppSampler::prepare(src, k, cfg, rng)?;
    sampler.sample(rng)
}
