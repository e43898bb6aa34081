mod common;

use common::*;
use kdpp::linalg::{determinant, eigendecompose_psd, effective_dimension, log_det_i_plus, Cholesky};
use kdpp::RandomStream;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_match_nalgebra(seed in any::<u64>(), n in 1usize..24, rank in 1usize..24) {
        let m = random_psd(n, rank, 1.0, &mut RandomStream::new(seed));
        let ours = eigendecompose_psd(&m).unwrap();
        let theirs = na_eigenvalues(&m);
        let top = theirs[0].abs().max(1.0);
        for (a, b) in ours.values.iter().zip(&theirs) {
            prop_assert!((a - b.max(0.0)).abs() <= 1e-9 * top, "{a} vs {b}");
        }
        prop_assert!(ours.reconstruct().max_abs_diff(&m) <= 1e-9 * top);
    }

    #[test]
    fn determinants_match_nalgebra(seed in any::<u64>(), n in 1usize..12, alpha in 0.01f64..10.0) {
        let m = random_psd(n, n, 0.7, &mut RandomStream::new(seed));
        let d = na_det(&m);
        prop_assert!((determinant(&m).unwrap() - d).abs() <= 1e-8 * d.abs().max(1.0));
        let want = na_det_i_plus(&m, alpha).ln();
        let got = log_det_i_plus(&m, alpha).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn effective_dimension_matches_nalgebra(seed in any::<u64>(), n in 1usize..20, alpha in 1e-3f64..1e3) {
        let m = random_psd(n, (n / 2).max(1), 1.0, &mut RandomStream::new(seed));
        let want = na_deff(&m, alpha);
        prop_assert!((effective_dimension(&m, alpha).unwrap() - want).abs() <= 1e-9 * n as f64);
    }

    #[test]
    fn cholesky_solves(seed in any::<u64>(), n in 1usize..16) {
        let mut rng = RandomStream::new(seed);
        let m = random_psd(n, n + 2, 1.0, &mut rng);
        let b: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let x = Cholesky::new(&m).unwrap().solve(&b);
        let na = to_na(&m).lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for (a, e) in x.iter().zip(na.iter()) {
            prop_assert!((a - e).abs() <= 1e-6 * e.abs().max(1.0), "{a} vs {e}");
        }
    }
}
