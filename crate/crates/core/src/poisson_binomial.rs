//! Subset-size law of a DPP: the Poisson Binomial with success
//! probabilities `alpha lambda_i / (alpha lambda_i + 1)`.
//!
//! Probabilities are kept in `f64` regardless of the kernel scalar type.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Exact pmf `p(0..=n)` of a sum of independent Bernoullis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    probs: Vec<f64>,
    mean: f64,
}

/// pmf of `|S|` for `S ~ DPP(alpha L)` given the eigenvalues of `L`.
pub fn size_pmf<T: Scalar>(eigenvalues: &[T], alpha: T) -> SizeDistribution {
    let ps: Vec<f64> = eigenvalues
        .iter()
        .map(|&l| {
            let x = (alpha * l.max(T::zero())).f64();
            x / (x + 1.0)
        })
        .collect();
    SizeDistribution::from_bernoulli(&ps)
}

impl SizeDistribution {
    /// Iterated convolution with `Bernoulli(p_i)` factors, `O(n^2)`.
    pub fn from_bernoulli(ps: &[f64]) -> Self {
        let mut probs: Vec<f64> = Vec::with_capacity(ps.len() + 1);
        probs.push(1.0);
        let mut mean = 0.0;
        for &p in ps {
            let p = p.clamp(0.0, 1.0);
            let q = 1.0 - p;
            mean += p;
            probs.push(0.0);
            for j in (1..probs.len()).rev() {
                probs[j] = probs[j].mul_add(q, probs[j - 1] * p);
            }
            probs[0] *= q;
        }
        Self { probs, mean }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of Bernoulli factors.
    pub fn trials(&self) -> usize {
        self.probs.len() - 1
    }

    /// `p(k)`; zero outside the support.
    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Sum of the success probabilities, i.e. `d_eff(alpha L)`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn below(&self, k: usize) -> f64 {
        self.probs[..k.min(self.probs.len())].iter().sum()
    }

    pub fn above(&self, k: usize) -> f64 {
        self.probs.iter().skip(k + 1).sum()
    }

    /// Argmax of the pmf, ties broken toward the smaller size.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (j, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = j;
            }
        }
        best
    }

    /// Smallest `j` with `P(|S| <= j) >= 1/2`.
    pub fn median(&self) -> usize {
        let mut acc = 0.0;
        for (j, &p) in self.probs.iter().enumerate() {
            acc += p;
            if acc >= 0.5 {
                return j;
            }
        }
        self.trials()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    // Relative slack for comparisons between pmf values.
    fn slack(&self) -> f64 {
        1e-12 * self.probs[self.mode()]
    }

    pub fn is_unimodal(&self) -> bool {
        let m = self.mode();
        let s = self.slack();
        self.probs[..=m].windows(2).all(|w| w[0] <= w[1] + s)
            && self.probs[m..].windows(2).all(|w| w[0] + s >= w[1])
    }

    /// `p(j)^2 >= p(j-1) p(j+1)` on the support.
    pub fn is_log_concave(&self) -> bool {
        let support: Vec<usize> = (0..self.probs.len()).filter(|&j| self.probs[j] > 0.0).collect();
        let (Some(&lo), Some(&hi)) = (support.first(), support.last()) else {
            return false;
        };
        // support must be an interval
        if hi - lo + 1 != support.len() {
            return false;
        }
        (lo + 1..hi).all(|j| {
            let (a, b, c) = (self.probs[j - 1], self.probs[j], self.probs[j + 1]);
            b * b >= a * c * (1.0 - 1e-9)
        })
    }

    pub fn median_near_mode(&self) -> bool {
        self.median().abs_diff(self.mode()) <= 1
    }

    /// Mode bracketing by the mean, with the three sub-cases of Darroch's theorem.
    pub fn darroch_holds(&self) -> bool {
        let mean = self.mean;
        let k = mean.floor() as usize;
        let n = self.trials() as f64;
        let kf = k as f64;
        let mode = self.mode();
        let tied = |a: usize, b: usize| (self.prob(a) - self.prob(b)).abs() <= self.slack();
        if mean < kf + 1.0 / (kf + 2.0) {
            mode == k || (mode == k + 1 && tied(k, k + 1))
        } else if mean <= kf + 1.0 - 1.0 / (n - kf + 1.0) {
            mode == k || mode == k + 1
        } else {
            mode == k + 1 || (mode == k && tied(k, k + 1)) || (k == self.trials() && mode == k)
        }
    }

    /// `p(mode) >= c / sqrt(mode + 1)`.
    pub fn mode_probability_bound_holds(&self, c: f64) -> bool {
        let m = self.mode();
        self.probs[m] >= c / ((m + 1) as f64).sqrt()
    }

    /// When `p(k) < c / (12 sqrt(3 (k+1)))`, the side of `k` holding the mode
    /// carries all but `1/2 - c/12` of the remaining mass on the other side.
    pub fn branching_property_holds(&self, k: usize, c: f64) -> bool {
        if self.prob(k) >= branching_threshold(k, c) {
            return true;
        }
        let bound = 0.5 - c / 12.0 + 1e-12;
        let mode = self.mode();
        if mode < k {
            self.above(k) <= bound
        } else if mode > k {
            self.below(k) <= bound
        } else {
            true
        }
    }
}

/// `c / (12 sqrt(3 (k+1)))`.
pub fn branching_threshold(k: usize, c: f64) -> f64 {
    c / (12.0 * (3.0 * (k as f64 + 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enumerate(ps: &[f64]) -> Vec<f64> {
        let n = ps.len();
        let mut out = vec![0.0; n + 1];
        for mask in 0u32..(1 << n) {
            let mut pr = 1.0;
            for (i, &p) in ps.iter().enumerate() {
                pr *= if mask >> i & 1 == 1 { p } else { 1.0 - p };
            }
            out[mask.count_ones() as usize] += pr;
        }
        out
    }

    #[test]
    fn small_examples() {
        let d = size_pmf(&[1.0, 1.0], 1.0);
        assert_eq!(d.probs(), &[0.25, 0.5, 0.25]);
        assert_eq!(d.mode(), 1);
        assert!(d.mode_probability_bound_holds(0.5));
        let e = size_pmf::<f64>(&[], 1.0);
        assert_eq!(e.probs(), &[1.0]);
        assert_eq!(e.mode(), 0);
        assert!(e.mode_probability_bound_holds(0.9));
        let tie = SizeDistribution::from_bernoulli(&[0.5]);
        assert_eq!(tie.mode(), 0);
    }

    #[test]
    fn matches_enumeration() {
        let lam = [1.0, 2.0, 3.0];
        let d = size_pmf(&lam, 1.0);
        let ps: Vec<f64> = lam.iter().map(|l| l / (l + 1.0)).collect();
        for (a, b) in d.probs().iter().zip(enumerate(&ps)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_branching() {
        let d = SizeDistribution::from_bernoulli(&[1.0; 5]);
        assert_eq!(d.mode(), 5);
        assert!(d.branching_property_holds(2, 1.0));
        assert!(d.branching_property_holds(2, 0.25));
    }

    #[test]
    fn large_sum_stays_normalized() {
        let ps: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let d = SizeDistribution::from_bernoulli(&ps);
        assert!((d.total() - 1.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn pmf_agrees_with_enumeration(ps in prop::collection::vec(0.0f64..=1.0, 0..12)) {
            let d = SizeDistribution::from_bernoulli(&ps);
            for (a, b) in d.probs().iter().zip(enumerate(&ps)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn structural_properties(ps in prop::collection::vec(0.0f64..=1.0, 1..60), k in 1usize..30) {
            let d = SizeDistribution::from_bernoulli(&ps);
            prop_assert!((d.total() - 1.0).abs() < 1e-10);
            prop_assert!(d.is_unimodal());
            prop_assert!(d.is_log_concave());
            prop_assert!(d.median_near_mode());
            prop_assert!(d.darroch_holds());
            prop_assert!(d.mode_probability_bound_holds(0.25));
            prop_assert!(d.branching_property_holds(k, 0.25));
        }
    }
}
