use approx::assert_relative_eq;
use proptest::prelude::*;
use trendfield::mesh::{build_mesh, Mesh, MeshParams, Point};
use trendfield::sparse::{CholeskyFactor, Ordering};
use trendfield::spde::{
    kappa_from, matern_corr, matern_cov, range_from, sigma2_from, spde_precision, tau_from, MaternParams,
    SpdeMatrices,
};
use trendfield::Error;

#[test]
fn parameter_couplings() {
    assert_relative_eq!(sigma2_from(1.0, 1.0).unwrap(), 1.0 / (4.0 * std::f64::consts::PI), epsilon = 1e-15);
    assert_relative_eq!(range_from(1.0).unwrap(), 8f64.sqrt(), epsilon = 1e-15);
    assert_relative_eq!(range_from(2.0).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
    let tau = tau_from(2.0, 0.25).unwrap();
    assert_relative_eq!(tau, 1.0 / (2.0 * 2.0 * (std::f64::consts::PI * 0.25).sqrt()), epsilon = 1e-15);
    assert_relative_eq!(sigma2_from(2.0, tau).unwrap(), 0.25, epsilon = 1e-15);
    assert!(matches!(sigma2_from(0.0, 1.0), Err(Error::NonPositiveParameter { name: "kappa", .. })));
    assert!(matches!(kappa_from(-1.0), Err(Error::NonPositiveParameter { .. })));
}

#[test]
fn correlation_at_range() {
    // ρ K₁(ρ) at ρ = √8.
    let c = matern_corr(8f64.sqrt(), 1.0);
    assert_relative_eq!(c, 0.13966747401529314286, epsilon = 1e-12);
    let p = MaternParams::new(2.0, 0.7).unwrap();
    assert_eq!(matern_cov(0.0, &p), 2.0);
    assert!(matern_corr(10.0 * p.range(), p.kappa) < 1e-6);
}

#[test]
fn isolated_vertex_precision() {
    // A tiny mesh stands in for a single vertex: with G = 0 the precision is
    // τ²κ⁴C.
    let mesh = Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
    let mut fem = mesh.fem_matrices().unwrap();
    fem.stiffness = fem.stiffness.scaled(0.0);
    let q = spde_precision(2.0, 3.0, &fem).unwrap();
    for i in 0..3 {
        assert_relative_eq!(q.get(i, i), 9.0 * 16.0 / 6.0, epsilon = 1e-12);
    }
}

fn small_mesh() -> Mesh {
    let locs: Vec<Point> = (0..25).map(|i| [(i % 5) as f64, (i / 5) as f64]).collect();
    build_mesh(
        &locs,
        &MeshParams {
            extension: 1.5,
            max_edge_inner: 0.8,
            max_edge_outer: 1.6,
            cutoff: 0.0,
        },
    )
    .unwrap()
}

#[test]
fn tau_scaling_is_exact() {
    let spde = SpdeMatrices::new(&small_mesh().fem_matrices().unwrap()).unwrap();
    let q1 = spde.precision(1.3, 0.7).unwrap();
    let q2 = spde.precision(1.3, 1.4).unwrap();
    assert!(q1.same_pattern(&q2));
    for (a, b) in q1.values().iter().zip(q2.values()) {
        assert_eq!(4.0 * a, *b);
    }
}

#[test]
fn precision_matches_dense_formula() {
    let fem = small_mesh().fem_matrices().unwrap();
    let q = spde_precision(0.9, 1.1, &fem).unwrap().to_dense();
    let c = fem.mass().to_dense();
    let cinv = c.clone().try_inverse().unwrap();
    let g = fem.stiffness.to_dense();
    let expected = (&c * 0.9f64.powi(4) + &g * (2.0 * 0.81) + &g * &cinv * &g) * 1.21;
    assert!((q - &expected).abs().max() < 1e-12 * expected.abs().max());
}

#[test]
fn interior_marginal_variance_matches_matern() {
    // Fine mesh, extension well beyond two ranges.
    let kappa = 2.0;
    let sigma2 = 1.0;
    let range = range_from(kappa).unwrap();
    let locs: Vec<Point> = (0..=10)
        .flat_map(|i| (0..=10).map(move |j| [i as f64 * 0.4, j as f64 * 0.4]))
        .collect();
    let mesh = build_mesh(
        &locs,
        &MeshParams {
            extension: 2.5 * range,
            max_edge_inner: 0.15,
            max_edge_outer: 0.3,
            cutoff: 0.0,
        },
    )
    .unwrap();
    let fem = mesh.fem_matrices().unwrap();
    let q = spde_precision(kappa, tau_from(kappa, sigma2).unwrap(), &fem).unwrap();
    let f = CholeskyFactor::new(&q, &Ordering::MinimumDegree).unwrap();
    let var = f.marginal_variances();
    let mut checked = 0;
    for (i, v) in mesh.vertices().iter().enumerate() {
        if (0.0..=4.0).contains(&v[0]) && (0.0..=4.0).contains(&v[1]) {
            assert!((var[i] - sigma2).abs() < 0.1 * sigma2, "vertex {i}: {}", var[i]);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inverse_pairs(kappa in 1e-3f64..1e3, tau in 1e-3f64..1e3) {
        let s = sigma2_from(kappa, tau).unwrap();
        prop_assert!((tau_from(kappa, s).unwrap() - tau).abs() <= 1e-14 * tau);
        prop_assert!((kappa_from(range_from(kappa).unwrap()).unwrap() - kappa).abs() <= 1e-14 * kappa);
    }

    #[test]
    fn correlation_is_decreasing(kappa in 0.05f64..5.0, d1 in 0.0f64..20.0, gap in 1e-3f64..5.0) {
        let a = matern_corr(d1, kappa);
        let b = matern_corr(d1 + gap, kappa);
        prop_assert!(a > b || (a < 1e-300 && b < 1e-300));
        prop_assert!(b >= 0.0 && a <= 1.0);
    }

    #[test]
    fn precision_is_positive_definite(log_kappa in -3.0f64..3.0, log_tau in -3.0f64..3.0) {
        let spde = SpdeMatrices::new(&small_mesh().fem_matrices().unwrap()).unwrap();
        let q = spde.precision(log_kappa.exp(), log_tau.exp()).unwrap();
        prop_assert!(CholeskyFactor::new(&q, &Ordering::MinimumDegree).is_ok());
    }
}
