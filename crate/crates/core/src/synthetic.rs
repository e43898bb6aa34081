//! Seeded Gaussian-mixture feature generator for benchmarks.

use serde::{Deserialize, Serialize};

use crate::data::Points;
use crate::error::{KdppError, Result};
use crate::rng::RandomStream;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: usize,
    pub dim: usize,
    /// Standard deviation of the component centers.
    pub center_scale: f64,
    /// Within-component standard deviation.
    pub spread: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            components: 10,
            dim: 20,
            center_scale: 1.0,
            spread: 0.5,
        }
    }
}

/// `n` points from the mixture. Values are rounded through `f32`, and point
/// `i` does not depend on `n`, so smaller grids are prefixes of larger ones.
pub fn gaussian_mixture<T: Scalar>(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Points<T>> {
    if spec.components == 0 || spec.dim == 0 {
        return Err(KdppError::ConfigError(
            "mixture needs at least one component and one dimension".into(),
        ));
    }
    let root = RandomStream::new(seed);
    let mut center_rng = root.keyed(0);
    let centers: Vec<f64> = (0..spec.components * spec.dim)
        .map(|_| spec.center_scale * center_rng.normal())
        .collect();
    let mut rng = root.keyed(1);
    let mut values = Vec::with_capacity(n * spec.dim);
    for _ in 0..n {
        let c = rng.index(spec.components);
        let center = &centers[c * spec.dim..(c + 1) * spec.dim];
        for &mu in center {
            let x = (mu + spec.spread * rng.normal()) as f32;
            values.push(T::of(x as f64));
        }
    }
    Points::new(n, spec.dim, values)
}
