//! Seeded, splittable randomness.
//!
//! Every sampling routine takes a [`RandomStream`] explicitly. Streams can be
//! split (fresh independent child) or keyed (counter-based child derived from
//! the parent's seed and a key, without consuming the parent).

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::error::{KdppError, Result};

#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; advances `self`.
    pub fn split(&mut self) -> RandomStream {
        RandomStream::new(self.rng.next_u64())
    }

    /// Counter-based child: depends only on this stream's seed and `key`.
    pub fn keyed(&self, key: u64) -> RandomStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(key.wrapping_add(1));
        let seed = rng.next_u64();
        RandomStream::new(seed)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Bernoulli draw; `p` is clamped to `[0, 1]`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            true
        } else if p <= 0.0 || p.is_nan() {
            false
        } else {
            self.uniform() < p
        }
    }

    /// Exact Poisson draw.
    pub fn poisson(&mut self, lambda: f64) -> Result<u64> {
        if lambda == 0.0 {
            return Ok(0);
        }
        let dist = Poisson::new(lambda)
            .map_err(|e| KdppError::ConfigError(format!("poisson intensity {lambda}: {e}")))?;
        Ok(dist.sample(&mut self.rng) as u64)
    }

    /// Exact Binomial draw.
    pub fn binomial(&mut self, trials: u64, p: f64) -> Result<u64> {
        let p = p.clamp(0.0, 1.0);
        let dist = Binomial::new(trials, p)
            .map_err(|e| KdppError::ConfigError(format!("binomial({trials}, {p}): {e}")))?;
        Ok(dist.sample(&mut self.rng))
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(rand_distr::StandardNormal)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
