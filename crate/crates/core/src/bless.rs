//! Doubling-`alpha` dictionary construction that also brackets the scale at
//! which `k` becomes the most likely DPP size.
//!
//! Each round doubles `alpha`, touches every item independently with
//! probability `b = min(q alpha kappa^2, 1)`, computes its approximate
//! marginal `l_j` with the previous round's dictionary and keeps it with
//! probability `min(q l_j, b) / b` and weight `1 / min(q l_j, b)`. The
//! effective dimension estimate of a round is the Horvitz-Thompson sum
//! `sum_{j in D} w_j l_j`, which equals `|D| / q` whenever `q l_j < b`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionaryCore, MarginalCache};
use crate::error::{KdppError, Result};
use crate::kernel::KernelSource;
use crate::rng::RandomStream;
use crate::scalar::Scalar;

/// Oversampling of the final, high-accuracy dictionary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "value")]
pub enum FinalOversampling {
    /// `q' = multiplier * q * d_hat^2` with `d_hat` the last round's estimate.
    ScaledByDeff(f64),
    /// `q'` given directly.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlessConfig {
    pub q: f64,
    pub q_final: FinalOversampling,
    /// Failure probability the caller has in mind; only recorded.
    pub delta: f64,
    /// Double `q` (and a fixed `q'`) and start over when a round comes back empty.
    pub q_doubling: bool,
    pub max_restarts: usize,
    pub max_levels: usize,
}

impl Default for BlessConfig {
    fn default() -> Self {
        Self {
            q: 2.0,
            q_final: FinalOversampling::Fixed(2.0),
            delta: 0.1,
            q_doubling: true,
            max_restarts: 8,
            max_levels: 64,
        }
    }
}

impl BlessConfig {
    fn validate(&self) -> Result<()> {
        let q_final = match self.q_final {
            FinalOversampling::ScaledByDeff(m) | FinalOversampling::Fixed(m) => m,
        };
        if !(self.q > 0.0 && self.q.is_finite()) || !(q_final > 0.0 && q_final.is_finite()) {
            return Err(KdppError::ConfigError("oversampling factors must be positive".into()));
        }
        if self.max_levels == 0 {
            return Err(KdppError::ConfigError("max_levels must be positive".into()));
        }
        Ok(())
    }
}

/// Oversampling for which a round's dictionary is `(eps, alpha)`-accurate
/// with probability `1 - delta`: `54 kappa^2 (2 eps + 1)^2 / eps^2 log(12 n^2 / delta)`.
pub fn theory_q(n: usize, kappa_sq: f64, eps: f64, delta: f64) -> f64 {
    let n = n as f64;
    54.0 * kappa_sq * (2.0 * eps + 1.0).powi(2) / (eps * eps) * (12.0 * n * n / delta).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub alpha: f64,
    pub deff_hat: f64,
    pub dictionary_size: usize,
    /// Items whose marginal was computed in this round.
    pub touched: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchInterval {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub deff_by_level: Vec<LevelEstimate>,
    /// The level cap was hit before the upper threshold was crossed.
    pub capped: bool,
    /// Doubling stopped early because the kernel has too few directions to
    /// reach the upper threshold.
    pub saturated: bool,
}

impl SearchInterval {
    pub fn new(alpha_min: f64, alpha_max: f64) -> Result<Self> {
        if !(alpha_min > 0.0 && alpha_min <= alpha_max && alpha_max.is_finite()) {
            return Err(KdppError::InvalidInput(format!(
                "invalid interval [{alpha_min}, {alpha_max}]"
            )));
        }
        Ok(Self {
            alpha_min,
            alpha_max,
            deff_by_level: Vec::new(),
            capped: false,
            saturated: false,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.alpha_max / self.alpha_min
    }

    /// Estimate at the smallest recorded level `>= alpha`.
    pub fn deff_at(&self, alpha: f64) -> Option<f64> {
        self.deff_by_level
            .iter()
            .filter(|l| l.alpha >= alpha * (1.0 - 1e-12))
            .min_by(|a, b| a.alpha.total_cmp(&b.alpha))
            .map(|l| l.deff_hat)
    }
}

#[derive(Clone, Debug)]
pub struct BlessOutput<T> {
    pub interval: SearchInterval,
    /// Dictionary for `alpha_max`, built with `q'`.
    pub dictionary: Dictionary<T>,
    pub q_used: f64,
    pub q_final_used: f64,
    pub restarts: usize,
    /// Items whose marginal was computed by any round.
    pub observed: HashSet<usize>,
}

impl<T: Scalar> BlessOutput<T> {
    /// Dictionary and interval in the JSON layout used by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dictionary": {
                "alpha": self.dictionary.alpha.f64(),
                "indices": self.dictionary.indices(),
                "weights": self.dictionary.weights().iter().map(|w| w.f64()).collect::<Vec<_>>(),
                "q": self.dictionary.q.f64(),
            },
            "interval": self.interval,
        })
    }
}

enum Attempt<T> {
    Done(BlessOutput<T>),
    Empty,
}

/// Lower threshold for the interval: `max((k - 1) / 2, 1/4)`.
pub fn lower_threshold(k: usize) -> f64 {
    ((k as f64 - 1.0) / 2.0).max(0.25)
}

/// Upper threshold: `2 (k + 2)`, lowered to `(n + k) / 2` on tiny ground
/// sets where `d_eff < n` could never exceed `2 (k + 2)`.
pub fn upper_threshold(k: usize, n: usize) -> f64 {
    (2.0 * (k as f64 + 2.0)).min((n + k) as f64 / 2.0)
}

pub fn bless_i<T: Scalar>(
    src: &KernelSource<T>,
    k: usize,
    cfg: &BlessConfig,
    rng: &mut RandomStream,
) -> Result<BlessOutput<T>> {
    cfg.validate()?;
    let n = src.n();
    if n == 0 {
        return Err(KdppError::InvalidInput("no items".into()));
    }
    if k == 0 || k > n {
        return Err(KdppError::InfeasibleSize {
            k,
            reason: format!("need 1 <= k <= n = {n}"),
        });
    }
    let mut q = cfg.q;
    let mut q_final = cfg.q_final;
    let mut observed = HashSet::new();
    for restart in 0..=cfg.max_restarts {
        match attempt(src, k, q, q_final, cfg.max_levels, rng, &mut observed)? {
            Attempt::Done(mut out) => {
                out.restarts = restart;
                out.observed = observed;
                return Ok(out);
            }
            Attempt::Empty if cfg.q_doubling => {
                q *= 2.0;
                if let FinalOversampling::Fixed(v) = q_final {
                    q_final = FinalOversampling::Fixed(2.0 * v);
                }
            }
            Attempt::Empty => return Err(KdppError::EmptyDictionary),
        }
    }
    Err(KdppError::BudgetExhausted {
        reason: format!("dictionary still empty after {} restarts", cfg.max_restarts),
        trace: None,
    })
}

/// Items touched by a `Bernoulli(b)` pass over `0..n`, drawn without
/// visiting every item: the count is Binomial, the positions uniform.
fn touched_items(n: usize, b: f64, rng: &mut RandomStream) -> Result<Vec<usize>> {
    if b >= 1.0 {
        return Ok((0..n).collect());
    }
    let count = rng.binomial(n as u64, b)? as usize;
    let mut idx = rand::seq::index::sample(rng, n, count).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

pub struct Round<T> {
    pub dictionary: Dictionary<T>,
    /// Horvitz-Thompson estimate of the effective dimension.
    pub deff_hat: f64,
    pub touched: usize,
}

/// One round: marginals of the touched items under `prev` at `alpha`, then
/// thinning.
pub fn bless_round<T: Scalar>(
    src: &KernelSource<T>,
    prev: &Dictionary<T>,
    alpha: T,
    q: f64,
    b: f64,
    rng: &mut RandomStream,
    observed: &mut HashSet<usize>,
) -> Result<Round<T>> {
    let core = DictionaryCore::build(prev, src)?;
    let scaled = core.at(alpha)?;
    let touched = touched_items(src.n(), b, rng)?;
    let mut cache = MarginalCache::new();
    let ls = cache.marginals(&scaled, src, &touched)?;
    observed.extend(touched.iter().copied());
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    let mut deff = 0.0;
    for (&j, &l) in touched.iter().zip(&ls) {
        let p = (q * l.f64()).min(b);
        if p > 0.0 && rng.bernoulli(p / b) {
            indices.push(j);
            weights.push(T::of(1.0 / p));
            deff += l.f64() / p;
        }
    }
    Ok(Round {
        dictionary: Dictionary::new(indices, weights, alpha, T::of(q))?,
        deff_hat: deff,
        touched: touched.len(),
    })
}

/// A kernel spanned by `dict` whose effective dimension at `alpha` is
/// within 1/2 of its rank: every direction already has `alpha lambda >> 1`,
/// the most likely size is the rank and further doubling changes nothing.
fn is_saturated<T: Scalar>(src: &KernelSource<T>, dict: &Dictionary<T>, alpha: f64) -> Result<bool> {
    let core = DictionaryCore::build(dict, src)?;
    let (eig, residual) = core.nystrom_spectrum(src)?;
    let trace: f64 = (0..src.n()).map(|i| src.entry(i, i).map(|v| v.f64())).sum::<Result<f64>>()?;
    if residual.f64() > trace * T::TOL_PSD {
        return Ok(false);
    }
    let top = eig.first().map_or(0.0, |e| e.f64());
    let rank = eig.iter().filter(|e| e.f64() > top * T::TOL_PSD).count();
    let deff: f64 = eig.iter().map(|e| alpha * e.f64() / (1.0 + alpha * e.f64())).sum();
    if deff < rank as f64 - 0.5 {
        return Ok(false);
    }
    log::warn!("kernel is numerically of rank {rank}; stopping the doubling at d_eff {deff:.3}");
    Ok(true)
}

fn attempt<T: Scalar>(
    src: &KernelSource<T>,
    k: usize,
    q: f64,
    q_final: FinalOversampling,
    max_levels: usize,
    rng: &mut RandomStream,
    observed: &mut HashSet<usize>,
) -> Result<Attempt<T>> {
    let n = src.n();
    let kappa = src.kappa_sq().f64();
    let base = (k as f64 - 1.0).max(1.0);
    let alpha0 = base / (n as f64 * kappa);
    let low = lower_threshold(k);
    let high = upper_threshold(k, n);

    // initial uniform dictionary, duplicates merged
    let draws = (q * base).ceil() as usize;
    let mut init: Vec<usize> = (0..draws).map(|_| rng.index(n)).collect();
    init.sort_unstable();
    init.dedup();
    let w0 = T::of(1.0 / (q * alpha0 * kappa));
    let mut dict = Dictionary::new(init.clone(), vec![w0; init.len()], T::of(alpha0), T::of(q))?;
    let mut levels = vec![LevelEstimate {
        alpha: alpha0,
        deff_hat: low,
        dictionary_size: dict.len(),
        touched: 0,
    }];
    let mut alpha = alpha0;
    let mut deff = low;
    let mut alpha_min = None;
    let mut capped = false;
    let mut saturated = false;
    while deff <= high {
        if levels.len() > max_levels {
            capped = true;
            break;
        }
        if dict.is_empty() {
            return Ok(Attempt::Empty);
        }
        let prev_alpha = alpha;
        let prev_deff = deff;
        alpha *= 2.0;
        let b = (q * alpha * kappa).min(1.0);
        let round = bless_round(src, &dict, T::of(alpha), q, b, rng, observed)?;
        dict = round.dictionary;
        deff = round.deff_hat;
        levels.push(LevelEstimate {
            alpha,
            deff_hat: deff,
            dictionary_size: dict.len(),
            touched: round.touched,
        });
        if alpha_min.is_none() && prev_deff <= low && deff > low {
            alpha_min = Some(prev_alpha);
        }
        if b >= 1.0 && !dict.is_empty() && is_saturated(src, &dict, alpha)? {
            saturated = true;
            if alpha_min.is_none() {
                alpha_min = Some(prev_alpha);
            }
            break;
        }
    }
    if dict.is_empty() {
        return Ok(Attempt::Empty);
    }
    let q_prime = match q_final {
        FinalOversampling::ScaledByDeff(m) => m * q * deff * deff,
        FinalOversampling::Fixed(v) => v,
    };
    let b_max = (q_prime * alpha * kappa).min(1.0);
    let final_dict = bless_round(src, &dict, T::of(alpha), q_prime, b_max, rng, observed)?.dictionary;
    if final_dict.is_empty() {
        return Ok(Attempt::Empty);
    }
    let interval = SearchInterval {
        alpha_min: alpha_min.unwrap_or(alpha0).min(alpha),
        alpha_max: alpha,
        deff_by_level: levels,
        capped,
        saturated,
    };
    Ok(Attempt::Done(BlessOutput {
        interval,
        dictionary: final_dict,
        q_used: q,
        q_final_used: q_prime,
        restarts: 0,
        observed: HashSet::new(),
    }))
}
