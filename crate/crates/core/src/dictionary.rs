//! Weighted Nyström dictionaries and the approximate marginals they induce.
//!
//! For a dictionary `(D, W)` the approximate marginal of item `i` at scale
//! `alpha` is
//!
//! ```text
//! l_i = alpha * (L_ii - alpha * L_iD (alpha L_DD + W^-1)^-1 L_Di)
//! ```
//!
//! With `L_hat = W^1/2 L_DD W^1/2 = U diag(lambda) U^T` this becomes
//! `alpha * (L_ii - alpha * sum_k y_k^2 / (alpha lambda_k + 1))` where
//! `y = U^T W^1/2 L_Di`. The eigendecomposition does not depend on `alpha`,
//! so one [`DictionaryCore`] serves every scale visited by the binary search.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KdppError, Result};
use crate::kernel::KernelSource;
use crate::linalg::{eigendecompose_psd, Matrix, SymmetricEigen};
use crate::scalar::{bound_slack, Scalar};

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Distinct item indices with strictly positive weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dictionary<T> {
    /// Scale the dictionary was built for.
    pub alpha: T,
    indices: Vec<usize>,
    weights: Vec<T>,
    /// Oversampling factor used to build it.
    pub q: T,
    #[serde(skip, default = "next_generation")]
    generation: u64,
}

impl<T: Scalar> Dictionary<T> {
    pub fn new(indices: Vec<usize>, weights: Vec<T>, alpha: T, q: T) -> Result<Self> {
        if indices.len() != weights.len() {
            return Err(KdppError::InvalidInput(format!(
                "{} indices but {} weights",
                indices.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > T::zero()) || !w.is_finite()) {
            return Err(KdppError::InvalidInput(format!(
                "dictionary weight {w} is not strictly positive"
            )));
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(KdppError::InvalidInput("duplicate dictionary index".into()));
        }
        Ok(Self {
            alpha,
            indices,
            weights,
            q,
            generation: next_generation(),
        })
    }

    /// `D = [n]`, `W = I`: reproduces the exact ridge leverage scores.
    pub fn full(n: usize) -> Self {
        Self::new((0..n).collect(), vec![T::one(); n], T::one(), T::one())
            .expect("full dictionary is valid")
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}

/// `L_hat = W^1/2 L_DD W^1/2`.
pub fn compressed_matrix<T: Scalar>(dict: &Dictionary<T>, src: &KernelSource<T>) -> Result<Matrix<T>> {
    let ldd = src.principal(dict.indices())?;
    let sw: Vec<T> = dict.weights().iter().map(|w| w.sqrt()).collect();
    Ok(Matrix::from_fn(ldd.rows(), ldd.cols(), |a, b| sw[a] * ldd[(a, b)] * sw[b]))
}

/// Scale-independent precomputation for a dictionary.
#[derive(Clone, Debug)]
pub struct DictionaryCore<T> {
    dict: Dictionary<T>,
    lhat: Matrix<T>,
    eig: SymmetricEigen<T>,
    // rows of U^T W^1/2
    projection: Matrix<T>,
}

impl<T: Scalar> DictionaryCore<T> {
    pub fn build(dict: &Dictionary<T>, src: &KernelSource<T>) -> Result<Self> {
        if dict.is_empty() {
            return Err(KdppError::EmptyDictionary);
        }
        if let Some(&bad) = dict.indices().iter().find(|&&i| i >= src.n()) {
            return Err(KdppError::IndexOutOfRange { index: bad, n: src.n() });
        }
        let lhat = compressed_matrix(dict, src)?;
        let eig = eigendecompose_psd(&lhat)?;
        let m = dict.len();
        let projection = Matrix::from_fn(m, m, |k, j| eig.vectors[(j, k)] * dict.weights()[j].sqrt());
        Ok(Self {
            dict: dict.clone(),
            lhat,
            eig,
            projection,
        })
    }

    pub fn dictionary(&self) -> &Dictionary<T> {
        &self.dict
    }

    pub fn lhat(&self) -> &Matrix<T> {
        &self.lhat
    }

    /// Eigenvalues of `L_hat`, descending and clipped at zero.
    pub fn lhat_eigenvalues(&self) -> &[T] {
        &self.eig.values
    }

    /// Nystrom residual `L_ii - L_iD L_hat^+ L_Di` (weights cancel), clamped
    /// at zero. Directions below the PSD tolerance are treated as null.
    pub fn residual(&self, src: &KernelSource<T>, i: usize) -> Result<T> {
        let z = self.whitened_row(src, i)?;
        let quad: T = z.iter().map(|&v| v * v).sum();
        Ok((src.entry(i, i)? - quad).max(T::zero()))
    }

    /// Eigenvalues of the Nystrom approximation `L_.D L_DD^+ L_D.` over all
    /// items, descending, and the summed residual `tr(L) - tr(approx)`.
    /// Weights cancel, so this depends only on the dictionary's items.
    /// Costs `O(n m^2)`.
    pub fn nystrom_spectrum(&self, src: &KernelSource<T>) -> Result<(Vec<T>, T)> {
        let rows: Vec<Vec<T>> = (0..src.n())
            .into_par_iter()
            .map(|i| self.whitened_row(src, i))
            .collect::<Result<_>>()?;
        let m = self.dict.len();
        let mut gram = Matrix::zeros(m, m);
        let mut residual = T::zero();
        for (i, z) in rows.iter().enumerate() {
            let mut quad = T::zero();
            for a in 0..m {
                quad += z[a] * z[a];
                for b in 0..m {
                    gram[(a, b)] += z[a] * z[b];
                }
            }
            residual += (src.entry(i, i)? - quad).max(T::zero());
        }
        Ok((eigendecompose_psd(&gram)?.values, residual))
    }

    // Lambda^-1/2 U^T W^1/2 L_Di over the directions above the tolerance.
    fn whitened_row(&self, src: &KernelSource<T>, i: usize) -> Result<Vec<T>> {
        let mut row = Vec::with_capacity(self.dict.len());
        src.row_into(i, self.dict.indices(), &mut row)?;
        let top = self.eig.values.first().copied().unwrap_or(T::zero());
        Ok(self
            .eig
            .values
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                if l > top * T::of(T::TOL_PSD) {
                    let y: T = self.projection.row(k).iter().zip(&row).map(|(&a, &b)| a * b).sum();
                    y / l.sqrt()
                } else {
                    T::zero()
                }
            })
            .collect())
    }

    /// `alpha L_DD + W^-1`, the matrix whose inverse the marginals need.
    pub fn core_matrix(&self, src: &KernelSource<T>, alpha: T) -> Result<Matrix<T>> {
        let ldd = src.principal(self.dict.indices())?;
        let w = self.dict.weights();
        Ok(Matrix::from_fn(ldd.rows(), ldd.cols(), |a, b| {
            let v = alpha * ldd[(a, b)];
            if a == b {
                v + T::one() / w[a]
            } else {
                v
            }
        }))
    }

    /// `d_eff(alpha L_hat)`.
    pub fn effective_dimension(&self, alpha: T) -> T {
        crate::linalg::effective_dimension_from_eigenvalues(&self.eig.values, alpha)
    }

    /// `log det(I + alpha L_hat)`.
    pub fn log_det_i_plus(&self, alpha: T) -> T {
        self.eig
            .values
            .iter()
            .map(|&l| (alpha * l).ln_1p())
            .sum()
    }

    pub fn at(&self, alpha: T) -> Result<ScaledCore<'_, T>> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(KdppError::ConfigError(format!("alpha must be positive, got {alpha}")));
        }
        let shrink = self
            .eig
            .values
            .iter()
            .map(|&l| alpha / (alpha * l + T::one()))
            .collect();
        Ok(ScaledCore {
            core: self,
            alpha,
            shrink,
        })
    }
}

/// A [`DictionaryCore`] prepared for one scale `alpha`.
#[derive(Clone, Debug)]
pub struct ScaledCore<'a, T> {
    core: &'a DictionaryCore<T>,
    alpha: T,
    // alpha / (alpha lambda_k + 1)
    shrink: Vec<T>,
}

impl<T: Scalar> ScaledCore<'_, T> {
    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn core(&self) -> &DictionaryCore<T> {
        self.core
    }

    /// Approximate marginal `l_i`, clamped to `[0, alpha kappa^2]`.
    pub fn marginal(&self, src: &KernelSource<T>, i: usize) -> Result<T> {
        let raw = self.raw_marginal(src, i)?;
        let cap = self.alpha * src.kappa_sq();
        let tol = T::of(1e-6).max(T::epsilon() * T::of(100.0)) * cap;
        if raw < -tol {
            return Err(KdppError::NumericalFailure(format!(
                "approximate marginal of item {i} is {raw}"
            )));
        }
        if raw > cap * (T::one() + bound_slack::<T>()) {
            log::warn!("approximate marginal of item {i} is {raw}, above alpha*kappa^2 = {cap}");
        }
        Ok(raw.max(T::zero()).min(cap))
    }

    /// Unclamped value of the marginal formula.
    pub fn raw_marginal(&self, src: &KernelSource<T>, i: usize) -> Result<T> {
        let dict = self.core.dictionary();
        let lii = src.entry(i, i)?;
        let mut row = Vec::with_capacity(dict.len());
        src.row_into(i, dict.indices(), &mut row)?;
        let p = &self.core.projection;
        let mut quad = T::zero();
        for (k, &s) in self.shrink.iter().enumerate() {
            let y: T = p.row(k).iter().zip(&row).map(|(&a, &b)| a * b).sum();
            quad += s * y * y;
        }
        Ok(self.alpha * (lii - quad))
    }
}

/// Per-scale memo of computed marginals.
///
/// Values are keyed by `(alpha, dictionary generation)`; asking for a
/// different key resets the memo. The set of items ever computed (across
/// resets) is kept for the observed-fraction statistic.
#[derive(Clone, Debug, Default)]
pub struct MarginalCache<T> {
    key: Option<(u64, u64)>,
    values: HashMap<usize, T>,
    observed: std::collections::HashSet<usize>,
    pub hits: u64,
    pub misses: u64,
}

/// Below this many pending items, marginals are computed on the calling thread.
const PARALLEL_BATCH: usize = 64;

impl<T: Scalar> MarginalCache<T> {
    pub fn new() -> Self {
        Self {
            key: None,
            values: HashMap::new(),
            observed: Default::default(),
            hits: 0,
            misses: 0,
        }
    }

    fn sync(&mut self, core: &ScaledCore<'_, T>) {
        let key = (core.alpha.f64().to_bits(), core.core.dictionary().generation());
        if self.key != Some(key) {
            self.key = Some(key);
            self.values.clear();
        }
    }

    /// Current upper bound for item `i`: the cached `l_i` or `alpha kappa^2`.
    pub fn upper_bound(&self, core: &ScaledCore<'_, T>, src: &KernelSource<T>, i: usize) -> T {
        let key = (core.alpha.f64().to_bits(), core.core.dictionary().generation());
        match (self.key == Some(key), self.values.get(&i)) {
            (true, Some(&v)) => v,
            _ => core.alpha * src.kappa_sq(),
        }
    }

    pub fn marginal(&mut self, core: &ScaledCore<'_, T>, src: &KernelSource<T>, i: usize) -> Result<T> {
        self.sync(core);
        if let Some(&v) = self.values.get(&i) {
            self.hits += 1;
            return Ok(v);
        }
        self.misses += 1;
        let v = core.marginal(src, i)?;
        self.values.insert(i, v);
        self.observed.insert(i);
        Ok(v)
    }

    /// Marginals for `items` (duplicates allowed), computing the missing ones
    /// in parallel. Values do not depend on the evaluation order.
    pub fn marginals(
        &mut self,
        core: &ScaledCore<'_, T>,
        src: &KernelSource<T>,
        items: &[usize],
    ) -> Result<Vec<T>> {
        self.sync(core);
        let mut pending: Vec<usize> = items
            .iter()
            .copied()
            .filter(|i| !self.values.contains_key(i))
            .collect();
        pending.sort_unstable();
        pending.dedup();
        let computed: Vec<(usize, T)> = if pending.len() >= PARALLEL_BATCH {
            pending
                .par_iter()
                .map(|&i| core.marginal(src, i).map(|v| (i, v)))
                .collect::<Result<_>>()?
        } else {
            pending
                .iter()
                .map(|&i| core.marginal(src, i).map(|v| (i, v)))
                .collect::<Result<_>>()?
        };
        self.misses += computed.len() as u64;
        self.hits += (items.len() - computed.len()) as u64;
        for (i, v) in computed {
            self.values.insert(i, v);
            self.observed.insert(i);
        }
        Ok(items.iter().map(|i| self.values[i]).collect())
    }

    /// Distinct items whose marginal was computed through this cache.
    pub fn observed(&self) -> &std::collections::HashSet<usize> {
        &self.observed
    }

    pub fn observed_count(&self) -> usize {
        self.observed.len()
    }
}

/// Largest deviation `max |eig(A^-1/2 B A^-1/2) - 1|` between
/// `A = I/alpha + Phi^T Phi` and `B = I/alpha + Phi_D^T W Phi_D`, where
/// `Phi = Lambda^1/2 U^T` comes from the eigendecomposition of `L`.
///
/// The dictionary is `(eps, alpha)`-accurate iff the result is at most `eps`.
/// Materializes `L`, so it is limited to small `n`.
pub fn accuracy_epsilon<T: Scalar>(dict: &Dictionary<T>, src: &KernelSource<T>, alpha: T) -> Result<T> {
    const CAP: usize = 2000;
    if src.n() > CAP {
        return Err(KdppError::Unsupported(format!(
            "accuracy certification needs n <= {CAP}, got {}",
            src.n()
        )));
    }
    let l = src.materialize()?;
    let eig = eigendecompose_psd(&l)?;
    let max = eig.values.first().copied().unwrap_or_else(T::zero);
    let rank: Vec<usize> = (0..eig.dim())
        .filter(|&k| eig.values[k] > T::of(T::TOL_PSD) * max)
        .collect();
    let r = rank.len();
    if r == 0 {
        return Ok(T::zero());
    }
    // scaled features: column k of Phi for item i is sqrt(lambda_k) u_ik,
    // whitened by A^-1/2 = diag(1 / sqrt(1/alpha + lambda_k))
    let inv_alpha = T::one() / alpha;
    let feat = |i: usize, a: usize| {
        let k = rank[a];
        let lam = eig.values[k];
        lam.sqrt() * eig.vectors[(i, k)] / (inv_alpha + lam).sqrt()
    };
    let mut m = Matrix::zeros(r, r);
    for a in 0..r {
        let k = rank[a];
        m[(a, a)] = inv_alpha / (inv_alpha + eig.values[k]);
    }
    for (&j, &w) in dict.indices().iter().zip(dict.weights()) {
        if j >= src.n() {
            return Err(KdppError::IndexOutOfRange { index: j, n: src.n() });
        }
        let f: Vec<T> = (0..r).map(|a| feat(j, a)).collect();
        for a in 0..r {
            for b in 0..r {
                m[(a, b)] += w * f[a] * f[b];
            }
        }
    }
    let sandwich = crate::linalg::eigendecompose_symmetric(&m)?;
    Ok(sandwich
        .values
        .iter()
        .map(|&v| (v - T::one()).abs())
        .fold(T::zero(), T::max))
}

/// Whether `(D, W)` is `(eps, alpha)`-accurate for `L` in spectral norm.
pub fn certify_accuracy<T: Scalar>(
    dict: &Dictionary<T>,
    src: &KernelSource<T>,
    alpha: T,
    eps: T,
) -> Result<bool> {
    let slack = T::of(T::TOL_PSD);
    Ok(accuracy_epsilon(dict, src, alpha)? <= eps + slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Cholesky;
    use crate::rng::RandomStream;

    fn random_kernel(n: usize, rank: usize, seed: u64) -> KernelSource<f64> {
        let mut rng = RandomStream::new(seed);
        let b = Matrix::from_fn(n, rank, |_, _| rng.normal() / (rank as f64).sqrt());
        KernelSource::from_matrix(b.matmul(&b.transpose()).unwrap()).unwrap()
    }

    // The marginal formula evaluated directly through a Cholesky solve.
    fn direct_marginal(src: &KernelSource<f64>, dict: &Dictionary<f64>, alpha: f64, i: usize) -> f64 {
        let core = DictionaryCore::build(dict, src).unwrap().core_matrix(src, alpha).unwrap();
        let chol = Cholesky::new(&core).unwrap();
        let row = src.block(&[i], dict.indices()).unwrap();
        let x = chol.solve(row.as_slice());
        let quad: f64 = x.iter().zip(row.as_slice()).map(|(a, b)| a * b).sum();
        alpha * (src.entry(i, i).unwrap() - alpha * quad)
    }

    fn exact_rls(l: &Matrix<f64>, alpha: f64) -> Vec<f64> {
        let n = l.rows();
        let shifted = Matrix::from_fn(n, n, |i, j| alpha * l[(i, j)] + if i == j { 1.0 } else { 0.0 });
        let inv = Cholesky::new(&shifted).unwrap().inverse();
        let prod = l.scaled(alpha).matmul(&inv).unwrap();
        prod.diag()
    }

    #[test]
    fn scalar_core_and_marginals() {
        let src = KernelSource::from_matrix(Matrix::from_diag(&[1.0])).unwrap();
        let dict = Dictionary::new(vec![0], vec![2.0], 1.0, 1.0).unwrap();
        let core = DictionaryCore::build(&dict, &src).unwrap();
        assert_eq!(core.core_matrix(&src, 1.0).unwrap().as_slice(), &[1.5]);

        // L = 2, D = {0}: w = 1 gives the exact 2/3, a huge weight drives l to 0
        let src = KernelSource::from_matrix(Matrix::from_diag(&[2.0f64])).unwrap();
        let exact = Dictionary::new(vec![0], vec![1.0], 1.0, 1.0).unwrap();
        let c = DictionaryCore::build(&exact, &src).unwrap();
        assert!((c.at(1.0).unwrap().marginal(&src, 0).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        let heavy = Dictionary::new(vec![0], vec![1e12], 1.0, 1.0).unwrap();
        let c = DictionaryCore::build(&heavy, &src).unwrap();
        assert!(c.at(1.0).unwrap().marginal(&src, 0).unwrap() < 1e-10);
    }

    #[test]
    fn empty_dictionary_rejected() {
        let src = KernelSource::from_matrix(Matrix::from_diag(&[1.0])).unwrap();
        let d = Dictionary::<f64>::new(vec![], vec![], 1.0, 1.0).unwrap();
        assert!(matches!(DictionaryCore::build(&d, &src), Err(KdppError::EmptyDictionary)));
    }

    #[test]
    fn no_interaction_means_no_correction() {
        let src = KernelSource::from_matrix(Matrix::from_diag(&[1.0f64, 0.7])).unwrap();
        let d = Dictionary::new(vec![0], vec![3.0], 1.0, 1.0).unwrap();
        let core = DictionaryCore::build(&d, &src).unwrap();
        let l = core.at(0.5).unwrap().marginal(&src, 1).unwrap();
        assert!((l - 0.35).abs() < 1e-15);
    }

    #[test]
    fn compressed_matrix_examples() {
        let src = KernelSource::from_matrix(Matrix::from_diag(&[4.0])).unwrap();
        let d = Dictionary::new(vec![0], vec![0.25], 1.0, 1.0).unwrap();
        assert_eq!(compressed_matrix(&d, &src).unwrap().as_slice(), &[1.0]);
        let src = random_kernel(6, 6, 1);
        let d = Dictionary::new(vec![4, 1, 2], vec![1.0; 3], 1.0, 1.0).unwrap();
        assert_eq!(compressed_matrix(&d, &src).unwrap(), src.principal(&[4, 1, 2]).unwrap());
    }

    #[test]
    fn random_dictionary_matches_direct_formula() {
        let src = random_kernel(12, 5, 4);
        let d = Dictionary::new(vec![3, 7, 0, 11, 5], vec![0.5, 2.0, 1.5, 4.0, 0.9], 1.0, 1.0).unwrap();
        let core = DictionaryCore::build(&d, &src).unwrap();
        for &alpha in &[0.1, 1.0, 7.0] {
            let sc = core.at(alpha).unwrap();
            for i in 0..12 {
                let a = sc.raw_marginal(&src, i).unwrap();
                let b = direct_marginal(&src, &d, alpha, i);
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn full_dictionary_gives_exact_rls() {
        for seed in 0..5 {
            let src = random_kernel(20, 8, seed);
            let l = src.materialize().unwrap();
            let core = DictionaryCore::build(&Dictionary::full(20), &src).unwrap();
            for &alpha in &[0.3, 1.0, 4.0] {
                let exact = exact_rls(&l, alpha);
                let sc = core.at(alpha).unwrap();
                for i in 0..20 {
                    assert!((sc.marginal(&src, i).unwrap() - exact[i]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn exact_marginals_grow_with_alpha() {
        let l = Matrix::from_diag(&[0.1, 1.0, 5.0, 20.0]);
        let mut prev = exact_rls(&l, 0.01);
        for step in 1..30 {
            let cur = exact_rls(&l, 0.01 * 1.5f64.powi(step));
            assert!(cur.iter().zip(&prev).all(|(c, p)| c >= p));
            prev = cur;
        }
    }

    #[test]
    fn cache_reproduces_uncached_values() {
        let src = random_kernel(15, 4, 9);
        let d = Dictionary::new(vec![1, 4, 9], vec![2.0, 2.0, 2.0], 1.0, 1.0).unwrap();
        let core = DictionaryCore::build(&d, &src).unwrap();
        let sc = core.at(0.8).unwrap();
        let mut cache = MarginalCache::new();
        let mut rng = RandomStream::new(2);
        let items: Vec<usize> = (0..200).map(|_| rng.index(15)).collect();
        let batch = cache.marginals(&sc, &src, &items).unwrap();
        for (&i, &v) in items.iter().zip(&batch) {
            assert_eq!(v.to_bits(), sc.marginal(&src, i).unwrap().to_bits());
            assert_eq!(cache.marginal(&sc, &src, i).unwrap().to_bits(), v.to_bits());
        }
        assert!(cache.observed_count() <= 15);
        assert_eq!(cache.upper_bound(&sc, &src, items[0]), batch[0]);
        // a new scale invalidates the values but keeps the observed set
        let other = core.at(0.9).unwrap();
        assert_eq!(cache.upper_bound(&other, &src, items[0]), 0.9 * src.kappa_sq());
    }

    #[test]
    fn certification_examples() {
        let src = random_kernel(10, 10, 3);
        assert!(certify_accuracy(&Dictionary::full(10), &src, 0.7, 0.0).unwrap());
        let l = src.materialize().unwrap();
        let empty = Dictionary::<f64>::new(vec![], vec![], 1.0, 1.0).unwrap();
        let eig = eigendecompose_psd(&l).unwrap();
        let alpha = 0.2;
        let top = alpha * eig.values[0] / (alpha * eig.values[0] + 1.0);
        assert!(certify_accuracy(&empty, &src, alpha, top + 1e-9).unwrap());
        assert!(!certify_accuracy(&empty, &src, alpha, top - 1e-6).unwrap());
    }

    #[test]
    fn marginals_bounded_by_scaled_diagonal() {
        let src = random_kernel(20, 6, 12);
        let mut rng = RandomStream::new(5);
        for _ in 0..10 {
            let idx: Vec<usize> = {
                let mut v: Vec<usize> = (0..20).filter(|_| rng.bernoulli(0.3)).collect();
                if v.is_empty() {
                    v.push(0);
                }
                v
            };
            let w: Vec<f64> = idx.iter().map(|_| 0.1 + 5.0 * rng.uniform()).collect();
            let d = Dictionary::new(idx, w, 1.0, 1.0).unwrap();
            let core = DictionaryCore::build(&d, &src).unwrap();
            let alpha = 0.05 + rng.uniform();
            let sc = core.at(alpha).unwrap();
            for i in 0..20 {
                let v = sc.marginal(&src, i).unwrap();
                assert!(v >= 0.0 && v <= alpha * src.entry(i, i).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn residual_of_spanned_and_orthogonal_items() {
        let src = KernelSource::<f64>::from_matrix(Matrix::from_fn(3, 3, |a, b| if a == b { 2.0 } else { 0.0 })).unwrap();
        let dict = Dictionary::new(vec![0], vec![7.0], 1.0, 1.0).unwrap();
        let core = DictionaryCore::build(&dict, &src).unwrap();
        assert!(core.residual(&src, 0).unwrap().abs() < 1e-12);
        assert!((core.residual(&src, 1).unwrap() - 2.0).abs() < 1e-12);
        let low = random_kernel(10, 3, 5);
        let full = DictionaryCore::build(&Dictionary::new(vec![1, 4, 6, 8], vec![1.0; 4], 1.0, 1.0).unwrap(), &low).unwrap();
        for i in 0..10 {
            assert!(full.residual(&low, i).unwrap() < 1e-9);
        }
    }
}
