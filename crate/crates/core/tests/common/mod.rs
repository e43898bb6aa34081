#![allow(dead_code)]

use kdpp::{KernelFunction, KernelSource, Matrix, Points, RandomStream};
use nalgebra::DMatrix;

/// `B B^T` with a `n x rank` Gaussian `B`.
pub fn random_psd(n: usize, rank: usize, scale: f64, rng: &mut RandomStream) -> Matrix<f64> {
    let b: Vec<f64> = (0..n * rank).map(|_| rng.normal() * scale).collect();
    Matrix::from_fn(n, n, |i, j| (0..rank).map(|c| b[i * rank + c] * b[j * rank + c]).sum())
}

pub fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Eigenvalues by nalgebra, descending.
pub fn na_eigenvalues(m: &Matrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = to_na(m).symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

pub fn na_det(m: &Matrix<f64>) -> f64 {
    to_na(m).determinant()
}

/// `det(I + alpha M)` by nalgebra.
pub fn na_det_i_plus(m: &Matrix<f64>, alpha: f64) -> f64 {
    let n = m.rows();
    (DMatrix::identity(n, n) + to_na(m) * alpha).determinant()
}

/// `tr(alpha M (alpha M + I)^-1)` from nalgebra eigenvalues.
pub fn na_deff(m: &Matrix<f64>, alpha: f64) -> f64 {
    na_eigenvalues(m).iter().map(|&l| {
        let l = (alpha * l).max(0.0);
        l / (1.0 + l)
    }).sum()
}

/// RBF kernel on `n` standard normal points in `d` dimensions.
pub fn rbf_instance(n: usize, d: usize, sigma: f64, seed: u64) -> KernelSource<f64> {
    let mut rng = RandomStream::new(seed);
    let pts = Points::new(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap();
    KernelSource::from_features(pts, KernelFunction::Rbf { sigma }).unwrap()
}
