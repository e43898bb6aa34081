//! Rejection sampler for `DPP(alpha L)` that only computes marginals for a
//! small uniform subsample of the items.
//!
//! One iteration draws an intermediate multiset `sigma` whose items come
//! with their approximate marginals `l_i`, forms
//! `L_tilde_{ab} = L_{sigma_a sigma_b} / (r sqrt(l_a l_b))`, and accepts
//! with probability
//!
//! ```text
//! exp(s_tilde - t / r) det(I + alpha L_tilde) / det(I + alpha L_hat)
//! ```
//!
//! where `s_tilde = d_eff(alpha L_hat)`. An accepted `sigma` is finished by
//! an exact DPP draw on `alpha L_tilde`. The output law is `DPP(alpha L)`
//! whatever the dictionary and `r >= 1` are; they only affect the cost.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dictionary::{DictionaryCore, MarginalCache, ScaledCore};
use crate::dpp_exact::sample_dpp;
use crate::error::{KdppError, Result};
use crate::kernel::KernelSource;
use crate::linalg::{log_det_i_plus, Matrix};
use crate::rng::RandomStream;
use crate::scalar::Scalar;

/// Largest Poisson intensity accepted for the proposal size.
pub const MAX_INTENSITY: f64 = 2_147_483_648.0;

/// How the intermediate multiset is generated. All three have the same law.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// `u ~ Poisson(r e^(1/r) alpha n kappa^2)` uniform draws, each kept
    /// with probability `l_i / (alpha kappa^2)`.
    #[default]
    Uniform,
    /// `s_i ~ Poisson(r e^(1/r) l_i)` copies of every item.
    PerItemPoisson,
    /// `u_i ~ Poisson(r e^(1/r) alpha kappa^2)`, `s_i ~ Binomial(u_i, l_i / (alpha kappa^2))`.
    PerItemBinomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSamplerConfig<T> {
    pub alpha: T,
    pub r: T,
    /// Consecutive rejections tolerated before `r` doubles (or the draw fails).
    pub max_rejections: usize,
    pub r_doubling: bool,
    /// Hard cap on loop iterations per draw.
    pub max_iterations: usize,
    pub backend: Backend,
    /// Let the uniform backend compute every marginal once the proposal
    /// would touch more than `n ln n` items anyway.
    pub dense_fallback: bool,
}

impl<T: Scalar> AlphaSamplerConfig<T> {
    pub fn new(alpha: T, r: T) -> Self {
        Self {
            alpha,
            r,
            max_rejections: 64,
            r_doubling: true,
            max_iterations: 1_000_000,
            backend: Backend::Uniform,
            dense_fallback: true,
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(KdppError::ConfigError(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.r >= T::one()) || !self.r.is_finite() {
            return Err(KdppError::ConfigError(format!("r must be at least 1, got {}", self.r)));
        }
        if self.max_rejections == 0 || self.max_iterations == 0 {
            return Err(KdppError::ConfigError("rejection budgets must be positive".into()));
        }
        Ok(())
    }
}

/// The multiset `sigma` (with repetitions) and its marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct IntermediateSample<T> {
    pub sigma: Vec<usize>,
    pub marginals: Vec<T>,
    /// Size of the uniform pre-sample (total `u_i` for the binomial backend,
    /// `t` for the per-item Poisson backend).
    pub u: u64,
}

impl<T> IntermediateSample<T> {
    pub fn t(&self) -> usize {
        self.sigma.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub proposal_secs: f64,
    pub acceptance_secs: f64,
    pub finish_secs: f64,
}

impl PhaseTimings {
    fn absorb(&mut self, other: &PhaseTimings) {
        self.proposal_secs += other.proposal_secs;
        self.acceptance_secs += other.acceptance_secs;
        self.finish_secs += other.finish_secs;
    }
}

/// Per-draw statistics of the rejection loop.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub iterations: u64,
    pub accepted: u64,
    pub u_values: Vec<u64>,
    pub t_values: Vec<u64>,
    /// Fraction of the `n` items whose marginal has been computed.
    pub beta: f64,
    pub observed_items: usize,
    pub n: usize,
    pub accept_log_ratios: Vec<f64>,
    /// Value of `r` used by each iteration that started a new `r` level.
    pub r_history: Vec<f64>,
    pub marginal_hits: u64,
    pub marginal_misses: u64,
    pub timings: PhaseTimings,
}

impl SampleTrace {
    /// Concatenate `other` into `self`; `beta` is left to the caller.
    pub fn absorb(&mut self, other: &SampleTrace) {
        self.iterations += other.iterations;
        self.accepted += other.accepted;
        self.u_values.extend_from_slice(&other.u_values);
        self.t_values.extend_from_slice(&other.t_values);
        self.accept_log_ratios.extend_from_slice(&other.accept_log_ratios);
        self.r_history.extend_from_slice(&other.r_history);
        self.marginal_hits += other.marginal_hits;
        self.marginal_misses += other.marginal_misses;
        self.timings.absorb(&other.timings);
        self.n = self.n.max(other.n);
    }

    /// Accepted draws per loop iteration.
    pub fn acceptance_rate(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iterations as f64
        }
    }
}

/// `L_tilde_sigma` for an intermediate sample at oversampling `r`.
pub fn tilde_matrix<T: Scalar>(src: &KernelSource<T>, sample: &IntermediateSample<T>, r: T) -> Result<Matrix<T>> {
    let block = src.principal(&sample.sigma)?;
    let scale: Vec<T> = sample
        .marginals
        .iter()
        .map(|&l| T::one() / (r.sqrt() * l.sqrt()))
        .collect();
    let t = sample.t();
    Ok(Matrix::from_fn(t, t, |a, b| block[(a, b)] * scale[a] * scale[b]))
}

/// `s_tilde - t/r + log det(I + alpha L_tilde) - log det(I + alpha L_hat)`.
pub fn acceptance_log_ratio<T: Scalar>(
    src: &KernelSource<T>,
    sample: &IntermediateSample<T>,
    s_tilde: T,
    alpha: T,
    r: T,
    logdet_hat: T,
) -> Result<T> {
    let lt = tilde_matrix(src, sample, r)?;
    log_ratio_of(&lt, sample.t(), s_tilde, alpha, r, logdet_hat)
}

fn log_ratio_of<T: Scalar>(lt: &Matrix<T>, t: usize, s_tilde: T, alpha: T, r: T, logdet_hat: T) -> Result<T> {
    let ld = log_det_i_plus(lt, alpha)?;
    let ratio = s_tilde - T::of_usize(t) / r + ld - logdet_hat;
    if ratio.f64() > 1e-6 {
        log::warn!("acceptance log-ratio {ratio} is positive; the marginals may be inaccurate");
    }
    Ok(ratio)
}

/// Stateful sampler for one `(dictionary, alpha)` pair. The marginal cache
/// persists across draws, so repeated draws get cheaper.
pub struct AlphaSampler<'a, T: Scalar> {
    src: &'a KernelSource<T>,
    core: ScaledCore<'a, T>,
    cfg: AlphaSamplerConfig<T>,
    s_tilde: T,
    logdet_hat: T,
    cache: MarginalCache<T>,
}

impl<'a, T: Scalar> AlphaSampler<'a, T> {
    pub fn new(src: &'a KernelSource<T>, core: &'a DictionaryCore<T>, cfg: AlphaSamplerConfig<T>) -> Result<Self> {
        Self::with_cache(src, core, cfg, MarginalCache::new())
    }

    /// Reuse a cache from an earlier sampler (e.g. one at a different alpha)
    /// so that the observed-item set keeps accumulating.
    pub fn with_cache(
        src: &'a KernelSource<T>,
        core: &'a DictionaryCore<T>,
        cfg: AlphaSamplerConfig<T>,
        cache: MarginalCache<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        let core_at = core.at(cfg.alpha)?;
        let s_tilde = core.effective_dimension(cfg.alpha);
        let logdet_hat = core.log_det_i_plus(cfg.alpha);
        Ok(Self {
            src,
            core: core_at,
            cfg,
            s_tilde,
            logdet_hat,
            cache,
        })
    }

    pub fn config(&self) -> &AlphaSamplerConfig<T> {
        &self.cfg
    }

    /// `d_eff(alpha L_hat)`.
    pub fn s_tilde(&self) -> T {
        self.s_tilde
    }

    pub fn logdet_hat(&self) -> T {
        self.logdet_hat
    }

    pub fn cache(&self) -> &MarginalCache<T> {
        &self.cache
    }

    pub fn into_cache(self) -> MarginalCache<T> {
        self.cache
    }

    pub fn beta(&self) -> f64 {
        self.cache.observed_count() as f64 / self.src.n().max(1) as f64
    }

    fn intensity_factor(r: T) -> f64 {
        let r = r.f64();
        r * (1.0 / r).exp()
    }

    fn effective_backend(&self, r: T) -> Backend {
        let n = self.src.n() as f64;
        if self.cfg.backend == Backend::Uniform && self.cfg.dense_fallback && n > 1.0 {
            let total = Self::intensity_factor(r) * (self.cfg.alpha * self.src.kappa_sq()).f64() * n;
            if total >= n * n.ln() {
                return Backend::PerItemPoisson;
            }
        }
        self.cfg.backend
    }

    /// One pre-acceptance draw of `sigma` at oversampling `r`.
    pub fn propose(&mut self, r: T, rng: &mut RandomStream) -> Result<IntermediateSample<T>> {
        let n = self.src.n();
        let ak = self.cfg.alpha * self.src.kappa_sq();
        let factor = Self::intensity_factor(r);
        match self.effective_backend(r) {
            Backend::Uniform => {
                let lambda = factor * ak.f64() * n as f64;
                if lambda > MAX_INTENSITY {
                    return Err(KdppError::ConfigError(format!(
                        "proposal intensity {lambda:.3e} exceeds 2^31"
                    )));
                }
                let u = rng.poisson(lambda)?;
                let rho: Vec<usize> = (0..u).map(|_| rng.index(n)).collect();
                let ls = self.cache.marginals(&self.core, self.src, &rho)?;
                let mut sigma = Vec::new();
                let mut marginals = Vec::new();
                for (&i, &l) in rho.iter().zip(&ls) {
                    if rng.bernoulli((l / ak).f64()) {
                        sigma.push(i);
                        marginals.push(l);
                    }
                }
                Ok(IntermediateSample { sigma, marginals, u })
            }
            Backend::PerItemPoisson => {
                let all: Vec<usize> = (0..n).collect();
                let ls = self.cache.marginals(&self.core, self.src, &all)?;
                let mut sigma = Vec::new();
                let mut marginals = Vec::new();
                for (i, &l) in ls.iter().enumerate() {
                    let s = rng.poisson(factor * l.f64())?;
                    for _ in 0..s {
                        sigma.push(i);
                        marginals.push(l);
                    }
                }
                let u = sigma.len() as u64;
                Ok(IntermediateSample { sigma, marginals, u })
            }
            Backend::PerItemBinomial => {
                let lambda = factor * ak.f64();
                if lambda * n as f64 > MAX_INTENSITY {
                    return Err(KdppError::ConfigError(format!(
                        "proposal intensity {:.3e} exceeds 2^31",
                        lambda * n as f64
                    )));
                }
                let counts: Vec<u64> = (0..n).map(|_| rng.poisson(lambda)).collect::<Result<_>>()?;
                let touched: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
                let ls = self.cache.marginals(&self.core, self.src, &touched)?;
                let mut sigma = Vec::new();
                let mut marginals = Vec::new();
                for (&i, &l) in touched.iter().zip(&ls) {
                    let s = rng.binomial(counts[i], (l / ak).f64())?;
                    for _ in 0..s {
                        sigma.push(i);
                        marginals.push(l);
                    }
                }
                Ok(IntermediateSample {
                    sigma,
                    marginals,
                    u: counts.iter().sum(),
                })
            }
        }
    }

    pub fn log_ratio(&self, sample: &IntermediateSample<T>, r: T) -> Result<T> {
        acceptance_log_ratio(self.src, sample, self.s_tilde, self.cfg.alpha, r, self.logdet_hat)
    }

    /// Draw `S ~ DPP(alpha L)`; indices sorted.
    pub fn sample(&mut self, rng: &mut RandomStream) -> Result<(Vec<usize>, SampleTrace)> {
        let mut trace = SampleTrace {
            n: self.src.n(),
            ..SampleTrace::default()
        };
        let hits0 = self.cache.hits;
        let misses0 = self.cache.misses;
        let mut r = self.cfg.r;
        trace.r_history.push(r.f64());
        let mut streak = 0usize;
        loop {
            if trace.iterations as usize >= self.cfg.max_iterations {
                return Err(self.exhausted("iteration cap reached", trace, hits0, misses0));
            }
            trace.iterations += 1;
            let clock = Instant::now();
            let sample = self.propose(r, rng)?;
            trace.timings.proposal_secs += clock.elapsed().as_secs_f64();
            trace.u_values.push(sample.u);
            trace.t_values.push(sample.t() as u64);

            let clock = Instant::now();
            let lt = tilde_matrix(self.src, &sample, r)?;
            let ratio = log_ratio_of(&lt, sample.t(), self.s_tilde, self.cfg.alpha, r, self.logdet_hat)?;
            trace.accept_log_ratios.push(ratio.f64());
            let accept = rng.bernoulli(ratio.f64().min(0.0).exp());
            trace.timings.acceptance_secs += clock.elapsed().as_secs_f64();

            if accept {
                let clock = Instant::now();
                let inner = sample_dpp(&lt.scaled(self.cfg.alpha), rng)?;
                let mut out: Vec<usize> = inner.into_iter().map(|a| sample.sigma[a]).collect();
                out.sort_unstable();
                out.dedup();
                trace.timings.finish_secs += clock.elapsed().as_secs_f64();
                trace.accepted = 1;
                self.finish_trace(&mut trace, hits0, misses0);
                return Ok((out, trace));
            }
            streak += 1;
            if streak >= self.cfg.max_rejections {
                if !self.cfg.r_doubling {
                    return Err(self.exhausted(
                        &format!("{streak} consecutive rejections"),
                        trace,
                        hits0,
                        misses0,
                    ));
                }
                r = r * T::of(2.0);
                trace.r_history.push(r.f64());
                streak = 0;
            }
        }
    }

    fn finish_trace(&self, trace: &mut SampleTrace, hits0: u64, misses0: u64) {
        trace.observed_items = self.cache.observed_count();
        trace.beta = self.beta();
        trace.marginal_hits = self.cache.hits - hits0;
        trace.marginal_misses = self.cache.misses - misses0;
    }

    fn exhausted(&self, reason: &str, mut trace: SampleTrace, hits0: u64, misses0: u64) -> KdppError {
        self.finish_trace(&mut trace, hits0, misses0);
        KdppError::BudgetExhausted {
            reason: reason.to_string(),
            trace: Some(Box::new(trace)),
        }
    }
}

/// One-shot convenience wrapper around [`AlphaSampler`].
pub fn sample_rescaled_dpp<T: Scalar>(
    src: &KernelSource<T>,
    core: &DictionaryCore<T>,
    cfg: AlphaSamplerConfig<T>,
    rng: &mut RandomStream,
) -> Result<(Vec<usize>, SampleTrace)> {
    AlphaSampler::new(src, core, cfg)?.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Dictionary;

    fn scalar_setup() -> (KernelSource<f64>, DictionaryCore<f64>) {
        let src = KernelSource::from_matrix(Matrix::from_diag(&[1.0])).unwrap();
        let core = DictionaryCore::build(&Dictionary::new(vec![0], vec![1.0], 1.0, 1.0).unwrap(), &src).unwrap();
        (src, core)
    }

    #[test]
    fn scalar_dpp_is_a_fair_coin_for_every_backend() {
        let (src, core) = scalar_setup();
        for backend in [Backend::Uniform, Backend::PerItemPoisson, Backend::PerItemBinomial] {
            let cfg = AlphaSamplerConfig::new(1.0, 1.0).with_backend(backend);
            let mut sampler = AlphaSampler::new(&src, &core, cfg).unwrap();
            let mut rng = RandomStream::new(17);
            let n = 10_000;
            let hits = (0..n)
                .filter(|_| !sampler.sample(&mut rng).unwrap().0.is_empty())
                .count();
            let sd = (n as f64 * 0.25).sqrt();
            assert!((hits as f64 - 5000.0).abs() < 3.0 * sd, "{backend:?}: {hits}");
        }
    }

    #[test]
    fn vanishing_alpha_returns_empty_and_observes_nothing() {
        let src = KernelSource::from_matrix(Matrix::<f64>::identity(100)).unwrap();
        let core = DictionaryCore::build(&Dictionary::full(100), &src).unwrap();
        let mut sampler = AlphaSampler::new(&src, &core, AlphaSamplerConfig::new(1e-9, 1.0)).unwrap();
        let mut rng = RandomStream::new(1);
        for _ in 0..100 {
            let (s, trace) = sampler.sample(&mut rng).unwrap();
            assert!(s.is_empty());
            assert!(trace.beta <= 0.02);
        }
    }

    #[test]
    fn empty_sigma_ratio_is_nonpositive() {
        let mut rng = RandomStream::new(4);
        for seed in 0..20 {
            let mut g = RandomStream::new(seed);
            let b = Matrix::from_fn(5, 5, |_, _| g.normal());
            let l = b.matmul(&b.transpose()).unwrap();
            let src = KernelSource::from_matrix(l).unwrap();
            let core = DictionaryCore::build(&Dictionary::full(5), &src).unwrap();
            let alpha = 0.1 + rng.uniform();
            let empty = IntermediateSample { sigma: vec![], marginals: vec![], u: 0 };
            let ratio = acceptance_log_ratio(
                &src,
                &empty,
                core.effective_dimension(alpha),
                alpha,
                1.0,
                core.log_det_i_plus(alpha),
            )
            .unwrap();
            assert!(ratio <= 0.0);
        }
    }

    #[test]
    fn budget_exhaustion_carries_the_trace() {
        // a badly mis-scaled dictionary with no r doubling and a tiny budget
        let src = KernelSource::from_matrix(Matrix::<f64>::identity(30).scaled(4.0)).unwrap();
        let core = DictionaryCore::build(&Dictionary::new(vec![0], vec![1e-6], 1.0, 1.0).unwrap(), &src).unwrap();
        let mut cfg = AlphaSamplerConfig::new(3.0, 1.0);
        cfg.r_doubling = false;
        cfg.max_rejections = 1;
        let mut sampler = AlphaSampler::new(&src, &core, cfg).unwrap();
        let mut rng = RandomStream::new(2);
        let mut saw = false;
        for _ in 0..50 {
            if let Err(KdppError::BudgetExhausted { trace: Some(t), .. }) = sampler.sample(&mut rng) {
                assert_eq!(t.iterations, 1);
                saw = true;
                break;
            }
        }
        assert!(saw);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let (src, core) = scalar_setup();
        assert!(AlphaSampler::new(&src, &core, AlphaSamplerConfig::new(1.0, 0.5)).is_err());
        assert!(AlphaSampler::new(&src, &core, AlphaSamplerConfig::new(0.0, 1.0)).is_err());
        let big = KernelSource::from_matrix(Matrix::<f64>::identity(10)).unwrap();
        let core = DictionaryCore::build(&Dictionary::full(10), &big).unwrap();
        let mut cfg = AlphaSamplerConfig::new(1e9, 1.0);
        cfg.dense_fallback = false;
        let mut s = AlphaSampler::new(&big, &core, cfg).unwrap();
        assert!(matches!(s.sample(&mut RandomStream::new(0)), Err(KdppError::ConfigError(_))));
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let src = KernelSource::from_matrix(Matrix::from_fn(6, 6, |i, j| (-((i as f64 - j as f64).powi(2)) / 4.0).exp())).unwrap();
        let core = DictionaryCore::build(&Dictionary::full(6), &src).unwrap();
        let run = || {
            let mut s = AlphaSampler::new(&src, &core, AlphaSamplerConfig::new(0.7, 2.0)).unwrap();
            let mut rng = RandomStream::new(99);
            (0..50)
                .map(|_| {
                    let (x, t) = s.sample(&mut rng).unwrap();
                    (x, t.iterations, t.u_values, t.t_values)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
