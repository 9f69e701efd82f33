use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use trendfield::sparse::{CholeskyFactor, Ordering, SparseSymmetric};
use trendfield::timeseries::{ar1_covariance, ar1_log_det, ar1_precision, kron_precision, Ar1Params};

fn random_spd_dense(n: usize, seed: u64) -> SparseSymmetric {
    // Deterministic diagonally dominant matrix.
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, n as f64 + 1.0 + (seed % 3) as f64));
        for j in 0..i {
            let v = ((i * 7 + j * 3 + seed as usize) % 5) as f64 / 5.0 - 0.4;
            t.push((i, j, v));
        }
    }
    SparseSymmetric::from_triplets(n, t).unwrap()
}

#[test]
fn inverse_matches_closed_form() {
    for phi in [-0.9, 0.0, 0.5, 0.9] {
        let m = 20;
        let q = ar1_precision(&Ar1Params::new(phi, m).unwrap()).unwrap().to_dense();
        let inv = q.clone().try_inverse().unwrap();
        let cov = DMatrix::from_fn(m, m, |i, j| ar1_covariance(phi, i, j));
        for i in 0..m {
            for j in 0..m {
                assert!((inv[(i, j)] - cov[(i, j)]).abs() < 1e-10, "phi {phi} ({i},{j})");
            }
        }
        assert!((q * cov - DMatrix::<f64>::identity(m, m)).abs().max() < 1e-10);
    }
}

#[test]
fn single_time_point() {
    let q = ar1_precision(&Ar1Params::new(0.6, 1).unwrap()).unwrap();
    assert_relative_eq!(q.get(0, 0), 0.64, epsilon = 1e-15);
    assert_relative_eq!(1.0 / q.get(0, 0), ar1_covariance(0.6, 0, 0), epsilon = 1e-14);
}

#[test]
fn closed_form_log_det() {
    let p = Ar1Params::new(0.7, 12).unwrap();
    let f = CholeskyFactor::new(&ar1_precision(&p).unwrap(), &Ordering::Natural).unwrap();
    assert_relative_eq!(f.log_det(), ar1_log_det(&p).unwrap(), epsilon = 1e-12);
}

#[test]
fn identity_kronecker_is_block_diagonal() {
    let qs = random_spd_dense(3, 1);
    let k = kron_precision(&SparseSymmetric::identity(2).unwrap(), &qs).to_dense();
    let d = qs.to_dense();
    assert_eq!(k.view((0, 0), (3, 3)), d);
    assert_eq!(k.view((3, 3), (3, 3)), d);
    assert!(k.view((3, 0), (3, 3)).iter().all(|&v| v == 0.0));
}

#[test]
fn kronecker_matches_dense() {
    let qt = ar1_precision(&Ar1Params::new(0.3, 2).unwrap()).unwrap();
    let qs = random_spd_dense(2, 4);
    let k = kron_precision(&qt, &qs).to_dense();
    assert_eq!(k, qt.to_dense().kronecker(&qs.to_dense()));
}

#[test]
fn phi_zero_paths_have_no_lag_correlation() {
    let qt = ar1_precision(&Ar1Params::new(0.0, 4).unwrap()).unwrap();
    let qs = random_spd_dense(3, 2);
    let f = CholeskyFactor::new(&kron_precision(&qt, &qs), &Ordering::MinimumDegree).unwrap();
    let n = 20_000;
    let draws = f.sample(n, 5);
    let (mut num, mut den) = (0.0, 0.0);
    for x in &draws {
        for t in 0..3 {
            num += x[t * 3] * x[(t + 1) * 3];
            den += x[t * 3] * x[t * 3];
        }
    }
    let r = num / den;
    assert!(r.abs() < 4.0 / ((3 * n) as f64).sqrt(), "lag-1 correlation {r}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn kron_log_det_identity(m in 1usize..10, g in 1usize..10, phi in -0.95f64..0.95, seed in 0u64..50) {
        let qt = ar1_precision(&Ar1Params::new(phi, m).unwrap()).unwrap();
        let qs = random_spd_dense(g, seed);
        let k = kron_precision(&qt, &qs);
        let lk = CholeskyFactor::new(&k, &Ordering::MinimumDegree).unwrap().log_det();
        let lt = CholeskyFactor::new(&qt, &Ordering::Natural).unwrap().log_det();
        let ls = CholeskyFactor::new(&qs, &Ordering::Natural).unwrap().log_det();
        let expected = g as f64 * lt + m as f64 * ls;
        prop_assert!((lk - expected).abs() <= 1e-8 * expected.abs().max(1.0));
    }

    #[test]
    fn precision_times_covariance_is_identity(m in 1usize..30, phi in -0.99f64..0.99) {
        let q = ar1_precision(&Ar1Params::new(phi, m).unwrap()).unwrap().to_dense();
        let cov = DMatrix::from_fn(m, m, |i, j| ar1_covariance(phi, i, j));
        let err = (q * cov - DMatrix::<f64>::identity(m, m)).abs().max();
        prop_assert!(err < 1e-10);
    }
}
