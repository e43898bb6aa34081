//! Similarity kernels accessed entry-wise.
//!
//! Feature-based kernels compute `L_ij` on demand, so an `n x n` matrix is
//! never materialized. The explicit mode holds a dense matrix and is capped
//! at [`DEFAULT_EXPLICIT_CAP`] items unless a larger cap is requested.

use serde::{Deserialize, Serialize};

use crate::data::Points;
use crate::error::{KdppError, Result};
use crate::linalg::Matrix;
use crate::scalar::{bound_slack, Scalar};

pub const DEFAULT_EXPLICIT_CAP: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum KernelFunction<T> {
    /// `exp(-|x - y|^2 / (2 sigma^2))`
    Rbf { sigma: T },
    /// `<x, y>`
    Linear,
    /// `<x, y> / (|x| |y|)`, zero when either vector is zero
    Cosine,
}

#[derive(Clone, Debug)]
enum Repr<T> {
    Explicit(Matrix<T>),
    Features {
        points: Points<T>,
        function: KernelFunction<T>,
        // 1/|x_i| for cosine, unused otherwise
        inv_norms: Vec<T>,
    },
}

/// The PSD similarity matrix `L` together with a bound `kappa_sq >= max |L_ij|`.
#[derive(Clone, Debug)]
pub struct KernelSource<T> {
    n: usize,
    kappa_sq: T,
    repr: Repr<T>,
}

impl<T: Scalar> KernelSource<T> {
    /// Explicit matrix; `kappa_sq` is the largest absolute entry.
    pub fn from_matrix(l: Matrix<T>) -> Result<Self> {
        Self::from_matrix_capped(l, DEFAULT_EXPLICIT_CAP)
    }

    pub fn from_matrix_capped(l: Matrix<T>, cap: usize) -> Result<Self> {
        let kappa_sq = l.as_slice().iter().fold(T::zero(), |m, x| m.max(x.abs()));
        Self::explicit_with_kappa(l, kappa_sq, cap)
    }

    /// Explicit matrix with a caller-declared bound; entries are checked against it.
    pub fn from_matrix_with_kappa(l: Matrix<T>, kappa_sq: T) -> Result<Self> {
        Self::explicit_with_kappa(l, kappa_sq, DEFAULT_EXPLICIT_CAP)
    }

    fn explicit_with_kappa(l: Matrix<T>, kappa_sq: T, cap: usize) -> Result<Self> {
        if !l.is_square() {
            return Err(KdppError::InvalidInput(format!(
                "kernel matrix must be square, got {}x{}",
                l.rows(),
                l.cols()
            )));
        }
        let n = l.rows();
        if n > cap {
            return Err(KdppError::Unsupported(format!(
                "explicit kernel with {n} items exceeds the cap of {cap}"
            )));
        }
        if !l.is_symmetric(T::of(1e-10).max(T::epsilon() * T::of(16.0))) {
            return Err(KdppError::InvalidInput("kernel matrix is not symmetric".into()));
        }
        if l.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(KdppError::InvalidInput("kernel matrix has non-finite entries".into()));
        }
        check_kappa(kappa_sq)?;
        let src = Self {
            n,
            kappa_sq,
            repr: Repr::Explicit(l),
        };
        // explicit entries are all known, so validate them once up front
        for i in 0..n {
            for j in 0..=i {
                src.entry(i, j)?;
            }
        }
        Ok(src)
    }

    pub fn from_features(points: Points<T>, function: KernelFunction<T>) -> Result<Self> {
        let n = points.n();
        let (kappa_sq, inv_norms) = match function {
            KernelFunction::Rbf { sigma } => {
                if !(sigma > T::zero()) || !sigma.is_finite() {
                    return Err(KdppError::ConfigError(format!(
                        "rbf bandwidth must be positive, got {sigma}"
                    )));
                }
                (T::one(), Vec::new())
            }
            KernelFunction::Cosine => {
                let inv = (0..n)
                    .map(|i| {
                        let norm = dot(points.row(i), points.row(i)).sqrt();
                        if norm > T::zero() {
                            T::one() / norm
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                (T::one(), inv)
            }
            KernelFunction::Linear => {
                let max_sq = (0..n)
                    .map(|i| dot(points.row(i), points.row(i)))
                    .fold(T::zero(), T::max);
                // an all-zero data set still needs a positive bound
                (max_sq.max(T::min_positive_value()), Vec::new())
            }
        };
        Ok(Self {
            n,
            kappa_sq,
            repr: Repr::Features {
                points,
                function,
                inv_norms,
            },
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn kappa_sq(&self) -> T {
        self.kappa_sq
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.repr, Repr::Explicit(_))
    }

    /// `L_ij`, checked against `kappa_sq`.
    pub fn entry(&self, i: usize, j: usize) -> Result<T> {
        self.check_index(i)?;
        self.check_index(j)?;
        let v = self.raw(i, j);
        if v.abs() > self.kappa_sq * (T::one() + bound_slack::<T>()) {
            return Err(KdppError::KappaBoundViolated {
                i,
                j,
                value: v.f64(),
                kappa_sq: self.kappa_sq.f64(),
            });
        }
        Ok(v)
    }

    /// Block `B_ab = L_{rows[a], cols[b]}`; duplicated indices repeat rows/columns.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Result<Matrix<T>> {
        let mut out = Matrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = self.entry(i, j)?;
            }
        }
        Ok(out)
    }

    /// Symmetric principal block `L_{idx, idx}`, evaluating each pair once.
    pub fn principal(&self, idx: &[usize]) -> Result<Matrix<T>> {
        let m = idx.len();
        let mut out = Matrix::zeros(m, m);
        for a in 0..m {
            for b in 0..=a {
                let v = self.entry(idx[a], idx[b])?;
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        Ok(out)
    }

    /// Row `L_{i, cols}` written into `out`.
    pub fn row_into(&self, i: usize, cols: &[usize], out: &mut Vec<T>) -> Result<()> {
        out.clear();
        for &j in cols {
            out.push(self.entry(i, j)?);
        }
        Ok(())
    }

    /// Dense `n x n` matrix; only allowed up to the explicit cap.
    pub fn materialize(&self) -> Result<Matrix<T>> {
        if let Repr::Explicit(m) = &self.repr {
            return Ok(m.clone());
        }
        if self.n > DEFAULT_EXPLICIT_CAP {
            return Err(KdppError::Unsupported(format!(
                "refusing to materialize a {n}x{n} kernel",
                n = self.n
            )));
        }
        let all: Vec<usize> = (0..self.n).collect();
        self.principal(&all)
    }

    /// `tr(L)`, touching only the diagonal.
    pub fn trace(&self) -> Result<T> {
        (0..self.n).map(|i| self.entry(i, i)).sum()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(KdppError::IndexOutOfRange { index: i, n: self.n })
        }
    }

    #[inline]
    fn raw(&self, i: usize, j: usize) -> T {
        match &self.repr {
            Repr::Explicit(m) => m[(i, j)],
            Repr::Features {
                points,
                function,
                inv_norms,
            } => {
                let (x, y) = (points.row(i), points.row(j));
                match *function {
                    KernelFunction::Rbf { sigma } => {
                        if i == j {
                            return T::one();
                        }
                        let d2: T = x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum();
                        (-d2 / (T::of(2.0) * sigma * sigma)).exp()
                    }
                    KernelFunction::Linear => dot(x, y),
                    KernelFunction::Cosine => {
                        // clamp rounding noise so that the kappa check stays meaningful
                        (dot(x, y) * (inv_norms[i] * inv_norms[j])).max(-T::one()).min(T::one())
                    }
                }
            }
        }
    }
}

fn check_kappa<T: Scalar>(kappa_sq: T) -> Result<()> {
    if kappa_sq > T::zero() && kappa_sq.is_finite() {
        Ok(())
    } else {
        Err(KdppError::ConfigError(format!(
            "kappa^2 must be positive and finite, got {kappa_sq}"
        )))
    }
}

#[inline]
fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    fn random_points(n: usize, d: usize, seed: u64) -> Points<f64> {
        let mut rng = RandomStream::new(seed);
        Points::new(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn explicit_entries_and_blocks() {
        let l = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let src = KernelSource::from_matrix(l).unwrap();
        assert_eq!(src.entry(0, 1).unwrap(), 0.5);
        assert!(matches!(src.entry(2, 0), Err(KdppError::IndexOutOfRange { .. })));

        let one = KernelSource::from_matrix(Matrix::from_diag(&[2.0])).unwrap();
        let b = one.block(&[0, 0], &[0]).unwrap();
        assert_eq!((b.rows(), b.cols()), (2, 1));
        assert_eq!(b.as_slice(), &[2.0, 2.0]);
        let e = one.block(&[], &[]).unwrap();
        assert_eq!((e.rows(), e.cols()), (0, 0));

        let l3 = Matrix::from_fn(3, 3, |i, j| if i == j { 3.0 } else { (i + j) as f64 * 0.1 });
        let src3 = KernelSource::from_matrix(l3.clone()).unwrap();
        let r = src3.block(&[1], &[0, 2]).unwrap();
        assert_eq!(r.as_slice(), &[l3[(1, 0)], l3[(1, 2)]]);
    }

    #[test]
    fn feature_kernels() {
        let p = Points::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![1.0, 2.0]]).unwrap();
        let lin = KernelSource::from_features(p.clone(), KernelFunction::Linear).unwrap();
        assert_eq!(lin.entry(0, 1).unwrap(), 11.0);
        assert_eq!(lin.kappa_sq(), 25.0);
        let rbf = KernelSource::from_features(p.clone(), KernelFunction::Rbf { sigma: 1.0 }).unwrap();
        assert_eq!(rbf.entry(0, 2).unwrap(), 1.0);
        assert!((rbf.entry(0, 1).unwrap() - (-4.0f64).exp()).abs() < 1e-15);
        let cos = KernelSource::from_features(p, KernelFunction::Cosine).unwrap();
        assert!((cos.entry(1, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((cos.entry(0, 1).unwrap() - 11.0 / (5f64.sqrt() * 5.0)).abs() < 1e-15);
    }

    #[test]
    fn kappa_violation_is_reported() {
        let l = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let src = KernelSource::from_matrix_with_kappa(l.clone(), 0.8);
        assert!(matches!(src, Err(KdppError::KappaBoundViolated { .. })));
        assert!(KernelSource::from_matrix_with_kappa(l, 1.0).is_ok());
    }

    #[test]
    fn explicit_cap_and_shape() {
        let l = Matrix::<f64>::identity(5);
        assert!(matches!(
            KernelSource::from_matrix_capped(l, 4),
            Err(KdppError::Unsupported(_))
        ));
        let asym = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.1, 1.0]]).unwrap();
        assert!(KernelSource::from_matrix(asym).is_err());
    }

    #[test]
    fn symmetry_on_random_pairs() {
        let p = random_points(50, 4, 2);
        let mut rng = RandomStream::new(3);
        for f in [
            KernelFunction::Rbf { sigma: 1.3 },
            KernelFunction::Linear,
            KernelFunction::Cosine,
        ] {
            let src = KernelSource::from_features(p.clone(), f).unwrap();
            for _ in 0..1000 {
                let (i, j) = (rng.index(50), rng.index(50));
                assert_eq!(src.entry(i, j).unwrap(), src.entry(j, i).unwrap());
            }
        }
    }

    #[test]
    fn materialized_rbf_is_psd() {
        let p = random_points(30, 3, 8);
        let src = KernelSource::from_features(p, KernelFunction::Rbf { sigma: 0.7 }).unwrap();
        let l = src.materialize().unwrap();
        let eig = crate::linalg::eigendecompose_psd(&l).unwrap();
        assert!(eig.values.iter().all(|&v| v >= 0.0));
        assert!((src.trace().unwrap() - 30.0).abs() < 1e-12);
    }
}
