//! Spectral samplers for DPPs on small dense matrices.
//!
//! Both samplers pick a random set of eigenvectors and then draw from the
//! projection DPP they span, one item at a time.

use crate::error::{KdppError, Result};
use crate::linalg::{eigendecompose_psd, Matrix, SymmetricEigen};
use crate::rng::RandomStream;
use crate::scalar::Scalar;

/// Column norms below this are treated as a collapsed basis.
const DEGENERACY_FLOOR: f64 = 1e-12;

/// `S ~ DPP(M)`: `Pr(S) = det(M_S) / det(I + M)`. Indices are sorted.
pub fn sample_dpp<T: Scalar>(m: &Matrix<T>, rng: &mut RandomStream) -> Result<Vec<usize>> {
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    let eig = eigendecompose_psd(m)?;
    sample_dpp_from_eigen(&eig, rng)
}

pub fn sample_dpp_from_eigen<T: Scalar>(eig: &SymmetricEigen<T>, rng: &mut RandomStream) -> Result<Vec<usize>> {
    let chosen: Vec<usize> = (0..eig.dim())
        .filter(|&k| {
            let l = eig.values[k].f64();
            rng.bernoulli(l / (l + 1.0))
        })
        .collect();
    sample_projection(eig, &chosen, rng)
}

/// `S ~ k-DPP(M)`: `Pr(S) = det(M_S) / e_k(lambda)`. Indices are sorted.
pub fn sample_kdpp_small<T: Scalar>(m: &Matrix<T>, k: usize, rng: &mut RandomStream) -> Result<Vec<usize>> {
    let eig = eigendecompose_psd(m)?;
    let lmax = eig.values.first().map_or(0.0, |v| v.f64());
    let rank = eig
        .values
        .iter()
        .filter(|v| v.f64() > T::TOL_PSD * lmax && lmax > 0.0)
        .count();
    if k > rank {
        return Err(KdppError::InfeasibleSize {
            k,
            reason: format!("kernel has numerical rank {rank}"),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    // scale-free: dividing every eigenvalue by lmax leaves the law unchanged
    let lam: Vec<f64> = eig.values[..rank].iter().map(|v| v.f64() / lmax).collect();
    let n = lam.len();
    // table[l][j] = e_l(lam_0..lam_{j-1})
    let mut table = vec![vec![0.0f64; n + 1]; k + 1];
    table[0].iter_mut().for_each(|x| *x = 1.0);
    for l in 1..=k {
        for j in 1..=n {
            table[l][j] = table[l][j - 1] + lam[j - 1] * table[l - 1][j - 1];
        }
    }
    let mut chosen = Vec::with_capacity(k);
    let mut l = k;
    for j in (1..=n).rev() {
        if l == 0 {
            break;
        }
        let p = lam[j - 1] * table[l - 1][j - 1] / table[l][j];
        if rng.bernoulli(p) {
            chosen.push(j - 1);
            l -= 1;
        }
    }
    if l != 0 {
        return Err(KdppError::NumericalFailure("eigenvector selection came up short".into()));
    }
    sample_projection(&eig, &chosen, rng)
}

/// `e_0..=e_{k_max}` of the given values.
pub fn elementary_symmetric<T: Scalar>(values: &[T], k_max: usize) -> Vec<T> {
    let mut e = vec![T::zero(); k_max + 1];
    e[0] = T::one();
    for &v in values {
        for l in (1..=k_max).rev() {
            let prev = e[l - 1];
            e[l] += v * prev;
        }
    }
    e
}

/// Projection DPP onto the span of the selected eigenvectors.
fn sample_projection<T: Scalar>(eig: &SymmetricEigen<T>, chosen: &[usize], rng: &mut RandomStream) -> Result<Vec<usize>> {
    let m = eig.dim();
    let tol = 1e-9f64.max(10.0 * T::epsilon().f64());
    // basis[c] is one orthonormal column of length m
    let mut basis: Vec<Vec<f64>> = chosen
        .iter()
        .map(|&k| (0..m).map(|i| eig.vectors[(i, k)].f64()).collect())
        .collect();
    orthonormalize(&mut basis)?;
    let mut out = Vec::with_capacity(basis.len());
    while !basis.is_empty() {
        let s = basis.len() as f64;
        let weights: Vec<f64> = (0..m).map(|i| basis.iter().map(|v| v[i] * v[i]).sum()).collect();
        if let Some(w) = weights.iter().find(|&&w| !(-tol..=1.0 + tol).contains(&w)) {
            return Err(KdppError::NumericalFailure(format!(
                "projection marginal {w} outside [0, 1]"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - s).abs() > 1e-6 * s {
            return Err(KdppError::NumericalFailure(format!(
                "projection marginals sum to {total}, expected {s}"
            )));
        }
        let mut target = rng.uniform() * total;
        let mut pick = m - 1;
        for (i, &w) in weights.iter().enumerate() {
            if target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        // never pick an item the basis cannot represent
        if weights[pick] <= 0.0 {
            pick = (0..m).rev().find(|&i| weights[i] > 0.0).unwrap_or(pick);
        }
        out.push(pick);
        // eliminate the pivot column, then zero coordinate `pick` in the rest
        let piv = (0..basis.len())
            .max_by(|&a, &b| basis[a][pick].abs().total_cmp(&basis[b][pick].abs()))
            .expect("non-empty basis");
        let pivot = basis.swap_remove(piv);
        let pv = pivot[pick];
        for v in basis.iter_mut() {
            let f = v[pick] / pv;
            for (x, &p) in v.iter_mut().zip(&pivot) {
                *x -= f * p;
            }
            v[pick] = 0.0;
        }
        orthonormalize(&mut basis)?;
    }
    out.sort_unstable();
    Ok(out)
}

/// Modified Gram-Schmidt, applied twice for stability.
fn orthonormalize(basis: &mut [Vec<f64>]) -> Result<()> {
    for _ in 0..2 {
        for c in 0..basis.len() {
            let (done, rest) = basis.split_at_mut(c);
            let v = &mut rest[0];
            for u in done.iter() {
                let d: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (x, &y) in v.iter_mut().zip(u) {
                    *x -= d * y;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < DEGENERACY_FLOOR {
                return Err(KdppError::NumericalFailure(format!(
                    "projection basis collapsed (column norm {norm:e})"
                )));
            }
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_scalar() {
        let mut rng = RandomStream::new(1);
        assert!(sample_dpp(&Matrix::<f64>::zeros(0, 0), &mut rng).unwrap().is_empty());
        let m = Matrix::from_diag(&[1.0]);
        let n = 10_000;
        let hits = (0..n).filter(|_| !sample_dpp(&m, &mut rng).unwrap().is_empty()).count();
        let sd = (n as f64 * 0.25).sqrt();
        assert!((hits as f64 - n as f64 / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn elementary_symmetric_examples() {
        assert_eq!(elementary_symmetric(&[1.0, 1.0], 2), vec![1.0, 2.0, 1.0]);
        assert_eq!(elementary_symmetric(&[2.0, 3.0], 2), vec![1.0, 5.0, 6.0]);
        assert_eq!(elementary_symmetric(&[2.0, 3.0], 4), vec![1.0, 5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn elementary_symmetric_matches_subset_sums() {
        let lam = [0.3, 1.7, 2.2, 0.05, 4.0, 1.1];
        let e = elementary_symmetric(&lam, 6);
        let mut brute = [0.0; 7];
        for mask in 0u32..64 {
            let prod: f64 = (0..6).filter(|i| mask >> i & 1 == 1).map(|i| lam[i]).product();
            brute[mask.count_ones() as usize] += prod;
        }
        for (a, b) in e.iter().zip(brute) {
            assert!((a - b).abs() < 1e-10 * b.max(1.0));
        }
    }

    #[test]
    fn kdpp_small_edge_cases() {
        let mut rng = RandomStream::new(3);
        let id = Matrix::<f64>::identity(3);
        let mut counts = [0usize; 3];
        let n = 9000;
        for _ in 0..n {
            let s = sample_kdpp_small(&id, 1, &mut rng).unwrap();
            assert_eq!(s.len(), 1);
            counts[s[0]] += 1;
        }
        let sd = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - n as f64 / 3.0).abs() < 3.5 * sd));

        let full = Matrix::from_diag(&[1.0, 2.0, 0.5]);
        assert_eq!(sample_kdpp_small(&full, 3, &mut rng).unwrap(), vec![0, 1, 2]);
        let rank1 = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            sample_kdpp_small(&rank1, 2, &mut rng),
            Err(KdppError::InfeasibleSize { .. })
        ));
    }

    #[test]
    fn duplicated_rows_pick_one_copy() {
        // a multiset with the same item twice: the DPP never returns both copies
        let m = Matrix::from_rows(&[vec![2.0, 2.0, 0.3], vec![2.0, 2.0, 0.3], vec![0.3, 0.3, 1.0]]).unwrap();
        let mut rng = RandomStream::new(8);
        for _ in 0..2000 {
            let s = sample_dpp(&m, &mut rng).unwrap();
            assert!(!(s.contains(&0) && s.contains(&1)));
        }
    }
}
