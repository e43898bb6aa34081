//! Small dense linear algebra on symmetric matrices whose dimension is
//! polynomial in `k`, never `n`.

mod eigen;

use serde::{Deserialize, Serialize};

use crate::error::{KdppError, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix. Square symmetric instances play the role of the
/// small matrices `L_hat` and `L_tilde_sigma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Square symmetric matrix of dimension `O(poly(k))`.
pub type SmallMatrix<T> = Matrix<T>;

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(m: usize) -> Self {
        let mut out = Self::zeros(m, m);
        for i in 0..m {
            out[(i, i)] = T::one();
        }
        out
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut out = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            out[(i, i)] = d;
        }
        out
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(KdppError::InvalidInput(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(KdppError::InvalidInput("ragged rows".into()));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diag().into_iter().sum()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(KdppError::InvalidInput(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Principal submatrix on `idx` (duplicates allowed).
    pub fn principal(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), idx.len(), |a, b| self[(idx[a], idx[b])])
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.data.iter().fold(T::one(), |acc, x| acc.max(x.abs()));
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale))
    }

    fn require_square(&self, what: &str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(KdppError::InvalidInput(format!(
                "{what} needs a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `C` with `A = C C^T`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    factor: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Fails with `NumericalFailure` when a pivot is not strictly positive.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        a.require_square("cholesky")?;
        let m = a.rows();
        let mut c = Matrix::zeros(m, m);
        for j in 0..m {
            let mut s = a[(j, j)];
            for k in 0..j {
                s -= c[(j, k)] * c[(j, k)];
            }
            if !(s > T::zero()) || !s.is_finite() {
                return Err(KdppError::NumericalFailure(format!(
                    "cholesky pivot {j} is {s}"
                )));
            }
            let d = s.sqrt();
            c[(j, j)] = d;
            for i in (j + 1)..m {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= c[(i, k)] * c[(j, k)];
                }
                c[(i, j)] = s / d;
            }
        }
        Ok(Self { factor: c })
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    pub fn log_det(&self) -> T {
        let two = T::of(2.0);
        self.factor.diag().into_iter().map(|d| two * d.ln()).sum()
    }

    /// Solves `C y = b` in place.
    pub fn forward_solve(&self, b: &mut [T]) {
        let c = &self.factor;
        for i in 0..b.len() {
            let mut s = b[i];
            let row = c.row(i);
            for k in 0..i {
                s -= row[k] * b[k];
            }
            b[i] = s / row[i];
        }
    }

    /// Solves `C^T x = y` in place.
    pub fn backward_solve(&self, y: &mut [T]) {
        let c = &self.factor;
        for i in (0..y.len()).rev() {
            let mut s = y[i];
            for k in (i + 1)..y.len() {
                s -= c[(k, i)] * y[k];
            }
            y[i] = s / c[(i, i)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.forward_solve(&mut x);
        self.backward_solve(&mut x);
        x
    }

    pub fn inverse(&self) -> Matrix<T> {
        let m = self.dim();
        let mut inv = Matrix::zeros(m, m);
        let mut e = vec![T::zero(); m];
        for j in 0..m {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..m {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Eigenvalues in descending order, eigenvectors as matching columns.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Scalar> SymmetricEigen<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        let m = self.dim();
        Matrix::from_fn(m, m, |i, j| {
            (0..m)
                .map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)])
                .sum()
        })
    }

    pub fn column(&self, k: usize) -> Vec<T> {
        (0..self.dim()).map(|i| self.vectors[(i, k)]).collect()
    }
}

/// Plain symmetric eigendecomposition without PSD clipping, descending order.
pub fn eigendecompose_symmetric<T: Scalar>(m: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    m.require_square("eigendecomposition")?;
    let dim = m.rows();
    let (mut vals, vecs) = eigen::symmetric_eigen(m)?;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(KdppError::NumericalFailure("non-finite eigenvalue".into()));
    }
    vals.reverse();
    let vectors = Matrix::from_fn(dim, dim, |i, k| vecs[i * dim + (dim - 1 - k)]);
    Ok(SymmetricEigen {
        values: vals,
        vectors,
    })
}

/// Eigendecomposition of a PSD matrix: eigenvalues descending, negative
/// eigenvalues above `-TOL_PSD * lambda_max` clipped to zero.
pub fn eigendecompose_psd<T: Scalar>(m: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    let mut eig = eigendecompose_symmetric(m)?;
    let max = eig.values.first().copied().unwrap_or_else(T::zero).max(T::zero());
    let floor = -(T::of(T::TOL_PSD) * max.max(T::min_positive_value()));
    for v in eig.values.iter_mut() {
        if *v < T::zero() {
            if *v < floor && max > T::zero() {
                return Err(KdppError::NotPsd {
                    min_eig: v.f64(),
                    max_eig: max.f64(),
                });
            }
            *v = T::zero();
        }
    }
    // all-nonpositive matrix with a non-trivial negative part
    if max <= T::zero() {
        if let Some(&min) = eig.values.last() {
            if min < T::zero() {
                return Err(KdppError::NotPsd {
                    min_eig: min.f64(),
                    max_eig: max.f64(),
                });
            }
        }
    }
    Ok(eig)
}

/// `log det(I + scale * M)`; zero for a `0x0` matrix.
pub fn log_det_i_plus<T: Scalar>(m: &Matrix<T>, scale: T) -> Result<T> {
    m.require_square("log_det_i_plus")?;
    let dim = m.rows();
    if dim == 0 {
        return Ok(T::zero());
    }
    let shifted = Matrix::from_fn(dim, dim, |i, j| {
        let v = scale * m[(i, j)];
        if i == j {
            T::one() + v
        } else {
            v
        }
    });
    match Cholesky::new(&shifted) {
        Ok(c) => Ok(c.log_det()),
        Err(_) => {
            let eig = eigendecompose_psd(m)?;
            let out: T = eig
                .values
                .iter()
                .map(|&l| (T::one() + scale * l).ln())
                .sum();
            if out.is_finite() {
                Ok(out)
            } else {
                Err(KdppError::NumericalFailure("log-determinant not finite".into()))
            }
        }
    }
}

/// `tr(sM (sM + I)^{-1}) = sum_i s l_i / (s l_i + 1)`; zero when empty or `s == 0`.
pub fn effective_dimension<T: Scalar>(m: &Matrix<T>, scale: T) -> Result<T> {
    m.require_square("effective_dimension")?;
    if m.rows() == 0 || scale == T::zero() {
        return Ok(T::zero());
    }
    let eig = eigendecompose_psd(m)?;
    Ok(effective_dimension_from_eigenvalues(&eig.values, scale))
}

pub fn effective_dimension_from_eigenvalues<T: Scalar>(values: &[T], scale: T) -> T {
    values
        .iter()
        .map(|&l| {
            let x = scale * l.max(T::zero());
            x / (x + T::one())
        })
        .sum()
}

/// Determinant by Gaussian elimination with partial pivoting. Independent of
/// the Cholesky path; used by the enumeration oracles.
pub fn determinant<T: Scalar>(m: &Matrix<T>) -> Result<T> {
    m.require_square("determinant")?;
    let n = m.rows();
    let mut a = m.as_slice().to_vec();
    let mut det = T::one();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        let p = a[piv * n + col];
        if p == T::zero() {
            return Ok(T::zero());
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            det = -det;
        }
        det *= p;
        for r in (col + 1)..n {
            let f = a[r * n + col] / p;
            if f != T::zero() {
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= f * v;
                }
            }
        }
    }
    Ok(det)
}
