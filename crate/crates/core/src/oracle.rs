//! Brute-force ground truth for small instances and the chi-square
//! machinery used to compare samplers against it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{KdppError, Result};
use crate::linalg::{determinant, Matrix};
use crate::scalar::Scalar;

pub const MAX_ENUMERATION: usize = 14;

/// Bitmask of a subset of `0..64`.
pub fn subset_mask(items: &[usize]) -> u64 {
    items.iter().fold(0, |m, &i| m | (1u64 << i))
}

pub fn mask_items(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

fn check_size<T: Scalar>(l: &Matrix<T>) -> Result<usize> {
    let n = l.rows();
    if !l.is_square() {
        return Err(KdppError::InvalidInput("kernel must be square".into()));
    }
    if n > MAX_ENUMERATION {
        return Err(KdppError::Unsupported(format!(
            "enumeration is limited to n <= {MAX_ENUMERATION}, got {n}"
        )));
    }
    Ok(n)
}

fn subset_det<T: Scalar>(l: &Matrix<T>, mask: u64) -> Result<f64> {
    let items = mask_items(mask);
    if items.is_empty() {
        return Ok(1.0);
    }
    let sub = Matrix::from_fn(items.len(), items.len(), |a, b| l[(items[a], items[b])].f64());
    // principal minors of a PSD matrix are nonnegative; clip rounding noise
    Ok(determinant(&sub)?.max(0.0))
}

/// `Pr(S) = det(L_S) / det(I + L)` for every subset, keyed by bitmask.
pub fn enumerate_dpp<T: Scalar>(l: &Matrix<T>) -> Result<BTreeMap<u64, f64>> {
    let n = check_size(l)?;
    let shifted = Matrix::from_fn(n, n, |i, j| l[(i, j)].f64() + if i == j { 1.0 } else { 0.0 });
    let z = determinant(&shifted)?;
    (0..1u64 << n)
        .map(|mask| Ok((mask, subset_det(l, mask)? / z)))
        .collect()
}

/// `Pr(S) = det(L_S) / sum_{|S'| = k} det(L_S')` over the size-`k` subsets.
pub fn enumerate_kdpp<T: Scalar>(l: &Matrix<T>, k: usize) -> Result<BTreeMap<u64, f64>> {
    let n = check_size(l)?;
    if k > n {
        return Err(KdppError::InfeasibleSize {
            k,
            reason: format!("only {n} items"),
        });
    }
    let dets: Vec<(u64, f64)> = (0..1u64 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|mask| Ok((mask, subset_det(l, mask)?)))
        .collect::<Result<_>>()?;
    let z: f64 = dets.iter().map(|(_, d)| d).sum();
    if !(z > 0.0) {
        return Err(KdppError::InfeasibleSize {
            k,
            reason: "every size-k minor vanishes".into(),
        });
    }
    Ok(dets.into_iter().map(|(m, d)| (m, d / z)).collect())
}

/// `sum_{|S| = k} det(L_S)`, the normalizer of the k-DPP.
pub fn kdpp_normalizer<T: Scalar>(l: &Matrix<T>, k: usize) -> Result<f64> {
    let n = check_size(l)?;
    (0..1u64 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|mask| subset_det(l, mask))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Cells left after pooling.
    pub cells: usize,
}

/// Group cells (given by expected counts, ascending) so that every group
/// reaches `min_expected`; returns the group id of every cell.
fn pool(expected_sorted: &[f64], min_expected: f64) -> Vec<usize> {
    let mut group = vec![0; expected_sorted.len()];
    let mut current = 0;
    let mut acc = 0.0;
    let mut starts = vec![0];
    for (c, &e) in expected_sorted.iter().enumerate() {
        if acc >= min_expected {
            current += 1;
            starts.push(c);
            acc = 0.0;
        }
        group[c] = current;
        acc += e;
    }
    // a short final group joins its predecessor
    if acc < min_expected && current > 0 {
        let last = starts[current];
        for g in group.iter_mut().skip(last) {
            *g = current - 1;
        }
    }
    group
}

fn p_value(statistic: f64, dof: usize) -> Result<f64> {
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| KdppError::NumericalFailure(format!("chi-square with {dof} dof: {e}")))?;
    Ok(dist.sf(statistic))
}

/// Pearson goodness of fit of `observed` counts against `expected`
/// probabilities, pooling the smallest cells until each pooled cell expects
/// at least `min_expected` observations. Observations outside the support of
/// `expected` give a p-value of zero.
pub fn chi_square_gof<K: Ord + Clone>(
    observed: &BTreeMap<K, u64>,
    expected: &BTreeMap<K, f64>,
    min_expected: f64,
) -> Result<ChiSquareTest> {
    let total: u64 = observed.values().sum();
    if total == 0 {
        return Err(KdppError::InvalidInput("no observations".into()));
    }
    let outside: u64 = observed
        .iter()
        .filter(|(k, _)| expected.get(*k).is_none_or(|&p| p <= 0.0))
        .map(|(_, &c)| c)
        .sum();
    if outside > 0 {
        return Ok(ChiSquareTest {
            statistic: f64::INFINITY,
            dof: 0,
            p_value: 0.0,
            cells: 0,
        });
    }
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = expected
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| (n * p, observed.get(k).copied().unwrap_or(0) as f64))
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let groups = pool(&cells.iter().map(|c| c.0).collect::<Vec<_>>(), min_expected);
    let g = groups.iter().max().map_or(0, |m| m + 1);
    if g < 2 {
        return Err(KdppError::Unsupported("fewer than two cells after pooling".into()));
    }
    let mut exp = vec![0.0; g];
    let mut obs = vec![0.0; g];
    for (&gid, &(e, o)) in groups.iter().zip(&cells) {
        exp[gid] += e;
        obs[gid] += o;
    }
    let statistic: f64 = exp.iter().zip(&obs).map(|(e, o)| (o - e) * (o - e) / e).sum();
    let dof = g - 1;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: p_value(statistic, dof)?,
        cells: g,
    })
}

/// Chi-square test of homogeneity between several samples of categorical
/// outcomes. Categories are pooled (by combined frequency) until every
/// pooled category expects at least `min_expected` in each sample.
pub fn chi_square_homogeneity<K: Ord + Clone>(samples: &[BTreeMap<K, u64>], min_expected: f64) -> Result<ChiSquareTest> {
    if samples.len() < 2 {
        return Err(KdppError::InvalidInput("need at least two samples".into()));
    }
    let totals: Vec<f64> = samples.iter().map(|s| s.values().sum::<u64>() as f64).collect();
    if totals.iter().any(|&t| t == 0.0) {
        return Err(KdppError::InvalidInput("empty sample".into()));
    }
    let grand: f64 = totals.iter().sum();
    let mut combined: BTreeMap<K, f64> = BTreeMap::new();
    for s in samples {
        for (k, &c) in s {
            *combined.entry(k.clone()).or_default() += c as f64;
        }
    }
    let mut cats: Vec<(K, f64)> = combined.into_iter().collect();
    cats.sort_by(|a, b| a.1.total_cmp(&b.1));
    // pooling on the smallest sample's expected counts guarantees the floor everywhere
    let smallest = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let scaled: Vec<f64> = cats.iter().map(|(_, c)| c / grand * smallest).collect();
    let groups = pool(&scaled, min_expected);
    let g = groups.iter().max().map_or(0, |m| m + 1);
    if g < 2 {
        return Err(KdppError::Unsupported("fewer than two categories after pooling".into()));
    }
    let mut col = vec![0.0; g];
    let mut table = vec![vec![0.0; g]; samples.len()];
    for ((k, c), &gid) in cats.iter().zip(&groups) {
        col[gid] += c;
        for (row, s) in table.iter_mut().zip(samples) {
            row[gid] += s.get(k).copied().unwrap_or(0) as f64;
        }
    }
    let mut statistic = 0.0;
    for (row, &t) in table.iter().zip(&totals) {
        for (o, &cj) in row.iter().zip(&col) {
            let e = t * cj / grand;
            statistic += (o - e) * (o - e) / e;
        }
    }
    let dof = (g - 1) * (samples.len() - 1);
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: p_value(statistic, dof)?,
        cells: g,
    })
}

/// Tally of sampled subsets by bitmask.
pub fn tally<'a, I: IntoIterator<Item = &'a Vec<usize>>>(samples: I) -> BTreeMap<u64, u64> {
    let mut out = BTreeMap::new();
    for s in samples {
        *out.entry(subset_mask(s)).or_default() += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpp_exact::elementary_symmetric;
    use crate::linalg::{eigendecompose_psd, Cholesky};
    use crate::rng::RandomStream;

    fn random_psd(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = RandomStream::new(seed);
        let b = Matrix::from_fn(n, n, |_, _| rng.normal() / (n as f64).sqrt());
        b.matmul(&b.transpose()).unwrap()
    }

    #[test]
    fn scalar_and_diagonal_laws() {
        let p = enumerate_dpp(&Matrix::from_diag(&[1.0])).unwrap();
        assert_eq!(p[&0], 0.5);
        assert_eq!(p[&1], 0.5);
        let p = enumerate_dpp(&Matrix::from_diag(&[1.0, 3.0])).unwrap();
        let want = [1.0 / 8.0, 1.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0];
        for (mask, w) in want.iter().enumerate() {
            assert!((p[&(mask as u64)] - w).abs() < 1e-15);
        }
    }

    #[test]
    fn marginals_equal_leverage_scores() {
        let l = random_psd(6, 3);
        let p = enumerate_dpp(&l).unwrap();
        assert!((p.values().sum::<f64>() - 1.0).abs() < 1e-9);
        let shifted = Matrix::from_fn(6, 6, |i, j| l[(i, j)] + if i == j { 1.0 } else { 0.0 });
        let k = l.matmul(&Cholesky::new(&shifted).unwrap().inverse()).unwrap();
        for i in 0..6 {
            let marg: f64 = p.iter().filter(|(m, _)| *m >> i & 1 == 1).map(|(_, v)| v).sum();
            assert!((marg - k[(i, i)]).abs() < 1e-9);
        }
    }

    #[test]
    fn kdpp_laws() {
        let p = enumerate_kdpp(&Matrix::<f64>::identity(3), 1).unwrap();
        assert!(p.values().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p0 = enumerate_kdpp(&Matrix::<f64>::identity(3), 0).unwrap();
        assert_eq!(p0.len(), 1);
        assert_eq!(p0[&0], 1.0);
        let l = random_psd(6, 5);
        let eig = eigendecompose_psd(&l).unwrap();
        let e = elementary_symmetric(&eig.values, 3);
        assert!((kdpp_normalizer(&l, 3).unwrap() - e[3]).abs() < 1e-9);
        // conditional of the DPP on |S| = k
        let full = enumerate_dpp(&l).unwrap();
        let cond = enumerate_kdpp(&l, 3).unwrap();
        let ratios: Vec<f64> = cond.iter().map(|(m, v)| full[m] / v).collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-9 * ratios[0]));
        assert!(matches!(enumerate_dpp(&Matrix::<f64>::identity(15)), Err(KdppError::Unsupported(_))));
    }

    #[test]
    fn gof_examples() {
        let exp: BTreeMap<u32, f64> = [(0, 0.5), (1, 0.3), (2, 0.2)].into_iter().collect();
        let obs: BTreeMap<u32, u64> = [(0, 50), (1, 30), (2, 20)].into_iter().collect();
        let t = chi_square_gof(&obs, &exp, 5.0).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);

        let obs: BTreeMap<u32, u64> = [(0, 10)].into_iter().collect();
        let single: BTreeMap<u32, f64> = [(0, 1.0)].into_iter().collect();
        assert!(matches!(chi_square_gof(&obs, &single, 5.0), Err(KdppError::Unsupported(_))));

        // uniform data against a skewed hypothesis
        let mut rng = RandomStream::new(1);
        let mut obs = BTreeMap::new();
        for _ in 0..20_000 {
            *obs.entry(rng.index(4) as u32).or_insert(0u64) += 1;
        }
        let skew: BTreeMap<u32, f64> = [(0, 0.4), (1, 0.3), (2, 0.2), (3, 0.1)].into_iter().collect();
        assert!(chi_square_gof(&obs, &skew, 5.0).unwrap().p_value < 1e-6);
        let uni: BTreeMap<u32, f64> = (0..4).map(|k| (k, 0.25)).collect();
        assert!(chi_square_gof(&obs, &uni, 5.0).unwrap().p_value > 1e-4);
    }

    #[test]
    fn pooling_keeps_every_group_above_floor() {
        let e = [0.1, 0.2, 0.5, 1.0, 3.0, 4.0, 10.0, 20.0];
        let g = pool(&e, 5.0);
        let ng = g.iter().max().unwrap() + 1;
        let mut sums = vec![0.0; ng];
        for (&gid, &v) in g.iter().zip(&e) {
            sums[gid] += v;
        }
        assert!(sums.iter().all(|&s| s >= 5.0));
    }

    #[test]
    fn homogeneity_detects_difference() {
        let mut rng = RandomStream::new(2);
        let draw = |rng: &mut RandomStream, p: f64| {
            let mut m = BTreeMap::new();
            for _ in 0..5000 {
                *m.entry(rng.bernoulli(p) as u8).or_insert(0u64) += 1;
            }
            m
        };
        let a = draw(&mut rng, 0.3);
        let b = draw(&mut rng, 0.3);
        let c = draw(&mut rng, 0.4);
        assert!(chi_square_homogeneity(&[a.clone(), b], 5.0).unwrap().p_value > 1e-4);
        assert!(chi_square_homogeneity(&[a, c], 5.0).unwrap().p_value < 1e-6);
    }
}
