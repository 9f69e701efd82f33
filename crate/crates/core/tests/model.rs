mod common;

use approx::assert_relative_eq;
use common::{dense_oracle, random_instance};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trendfield::mesh::Mesh;
use trendfield::model::{
    assemble_design, log_posterior_theta, HyperParams, HyperPrior, LatentLayout, Model, ObservationPanel,
    BETA0_PRECISION,
};
use trendfield::sparse::{CholeskyFactor, Ordering};

fn prior() -> HyperPrior {
    HyperPrior::for_domain(5.0).unwrap()
}

fn square_mesh() -> Mesh {
    Mesh::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

#[test]
fn layout_is_contiguous() {
    let l = LatentLayout { g: 4, m: 3 };
    assert_eq!(l.beta0(), 0);
    assert_eq!(l.beta(), 1..5);
    assert_eq!(l.tau(0), 5..9);
    assert_eq!(l.tau(2), 13..17);
    assert_eq!(l.dim(), 17);
}

#[test]
fn design_rows_at_vertex() {
    let mesh = square_mesh();
    let panel = ObservationPanel::complete(vec![[1.0, 1.0]], vec![-2.0, 0.0, 2.0], vec![vec![0.1, 0.2, 0.3]]).unwrap();
    let layout = LatentLayout { g: 4, m: 3 };
    let proj = mesh.projector(panel.locations()).unwrap().matrix;
    let a = assemble_design(&panel, &proj, &layout).unwrap();
    let d = a.to_dense();
    // Time 2.0: 2 at β₀, 2 at β̃ of vertex 2, 1 at τ̃ of vertex 2 at t=2.
    assert_eq!(a.row(2).0.len(), 3);
    assert_eq!(d[(2, 0)], 2.0);
    assert_eq!(d[(2, 1 + 2)], 2.0);
    assert_eq!(d[(2, layout.tau(2).start + 2)], 1.0);
    // Time 0: only the residual entry.
    assert_eq!(a.row(1).0, &[layout.tau(1).start + 2]);
}

#[test]
fn design_reproduces_linear_predictor() {
    let inst = random_instance(3, 7, 4, 6, false);
    let layout = LatentLayout { g: 7, m: 4 };
    let proj = inst.mesh.projector(inst.panel.locations()).unwrap().matrix;
    let a = assemble_design(&inst.panel, &proj, &layout).unwrap();
    let x: Vec<f64> = (0..layout.dim()).map(|i| (i as f64 * 0.77).sin()).collect();
    let eta = a.matvec(&x).unwrap();
    let psi = proj.to_dense();
    for (r, (i, t, _)) in inst.panel.observations().enumerate() {
        let time = inst.panel.times()[t];
        let mut expected = time * x[0];
        for g in 0..7 {
            expected += psi[(i, g)] * (time * x[1 + g] + x[layout.tau(t).start + g]);
        }
        assert!((eta[r] - expected).abs() < 1e-12);
        assert!(a.row(r).0.len() <= 7);
    }
}

#[test]
fn prior_precision_structure() {
    let inst = random_instance(5, 6, 3, 5, false);
    let mut theta = inst.theta;
    theta.phi_internal = 0.0;
    let model = Model::new(inst.panel.clone(), &inst.mesh, prior()).unwrap();
    let q = model.prior_precision(&theta).unwrap();
    assert_eq!(q.get(0, 0), BETA0_PRECISION);
    let l = model.layout();
    // φ = 0: no coupling between time blocks.
    for i in l.tau(0) {
        for j in l.tau(1) {
            assert_eq!(q.get(i, j), 0.0);
        }
    }
    let dense = q.to_dense();
    let dense_ld = dense.cholesky().unwrap().determinant().ln();
    assert!((model.prior_log_det(&inst.theta).unwrap() - {
        let q = model.prior_precision(&inst.theta).unwrap();
        CholeskyFactor::new(&q, &Ordering::MinimumDegree).unwrap().log_det()
    })
    .abs()
        < 1e-8);
    let ld0 = model.prior_log_det(&theta).unwrap();
    assert!((ld0 - dense_ld).abs() < 1e-8 * dense_ld.abs().max(1.0));
}

#[test]
fn log_likelihood_matches_dense_oracle() {
    for seed in 0..20u64 {
        let g = 4 + (seed as usize % 5);
        let m = 1 + (seed as usize % 5);
        let n = 3 + (seed as usize % 6);
        let inst = random_instance(100 + seed, g, m, n, seed % 3 == 0);
        let oracle = dense_oracle(&inst);
        let model = Model::new(inst.panel.clone(), &inst.mesh, prior()).unwrap();
        let sparse = model.log_marginal_likelihood_sparse(&inst.theta).unwrap();
        assert!((sparse - oracle.log_lik).abs() < 1e-8, "seed {seed}: {sparse} vs {}", oracle.log_lik);
        if let Some(spectral) = model.log_marginal_likelihood_spectral(&inst.theta) {
            let spectral = spectral.unwrap();
            assert!((spectral - oracle.log_lik).abs() < 1e-8, "seed {seed} spectral: {spectral} vs {}", oracle.log_lik);
        }
        let lp = model.log_posterior(&inst.theta);
        assert_relative_eq!(lp - prior().log_density(&inst.theta), oracle.log_lik, epsilon = 1e-8);
    }
}

#[test]
fn posterior_latent_matches_dense_oracle() {
    for seed in 0..10u64 {
        let inst = random_instance(200 + seed, 5 + seed as usize % 3, 2 + seed as usize % 3, 6, seed % 2 == 0);
        let oracle = dense_oracle(&inst);
        let model = Model::new(inst.panel.clone(), &inst.mesh, prior()).unwrap();
        let post = model.posterior_latent(&inst.theta).unwrap();
        for i in 0..post.mean.len() {
            let scale = oracle.cov[(i, i)].sqrt();
            assert!((post.mean[i] - oracle.mean[i]).abs() < 1e-8 * scale.max(1.0), "mean {i}");
        }
        for (i, v) in post.marginal_variances().iter().enumerate() {
            assert_relative_eq!(*v, oracle.cov[(i, i)], max_relative = 1e-8);
        }
        // Trend block from both routes.
        let tp = model.trend_posterior_sparse(&inst.theta).unwrap();
        let k = model.layout().g + 1;
        let cov = tp.covariance();
        for a in 0..k {
            assert!((tp.mean[a] - oracle.mean[a]).abs() < 1e-7);
            for b in 0..k {
                assert_relative_eq!(cov[(a, b)], oracle.cov[(a, b)], max_relative = 1e-7, epsilon = 1e-9);
            }
        }
        let tp2 = model.trend_posterior(&inst.theta).unwrap();
        for a in 0..k {
            assert!((tp2.mean[a] - tp.mean[a]).abs() < 1e-7);
        }
        let vv = tp2.vertex_variances();
        for gidx in 0..k - 1 {
            let expected = oracle.cov[(0, 0)] + 2.0 * oracle.cov[(0, gidx + 1)] + oracle.cov[(gidx + 1, gidx + 1)];
            assert_relative_eq!(vv[gidx], expected, max_relative = 1e-6);
        }
    }
}

#[test]
fn single_observation_scalar_oracle() {
    let mesh = Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
    let panel = ObservationPanel::complete(vec![[1.0, 0.0]], vec![1.5], vec![vec![0.7]]).unwrap();
    let theta = HyperParams::from_array([0.3, 0.4, 0.1, -0.2, 0.5, 0.2]);
    let model = Model::new(panel, &mesh, prior()).unwrap();
    // y = 1.5 (β₀ + β̃₁) + τ̃₁ + ε, all independent Gaussians.
    let qb = common::dense_spde(&mesh, theta.kappa_beta(), theta.tau_beta()).try_inverse().unwrap();
    let qx = common::dense_spde(&mesh, theta.kappa_xi(), theta.tau_xi()).try_inverse().unwrap();
    let phi = theta.phi();
    let var = 2.25 * (1.0 / BETA0_PRECISION + qb[(1, 1)]) + qx[(1, 1)] / (1.0 - phi * phi) + 1.0 / theta.prec_eps();
    let expected = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * 0.49 / var;
    let got = model.log_marginal_likelihood_sparse(&theta).unwrap();
    assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    let spectral = model.log_marginal_likelihood_spectral(&theta).unwrap().unwrap();
    assert!((spectral - expected).abs() < 1e-10, "{spectral} vs {expected}");
}

#[test]
fn observation_order_does_not_matter() {
    let inst = random_instance(9, 6, 3, 6, true);
    let mut locs = inst.panel.locations().to_vec();
    let mut vals = inst.panel.values().to_vec();
    locs.reverse();
    vals.reverse();
    let permuted = ObservationPanel::new(locs, inst.panel.times().to_vec(), vals).unwrap();
    let a = log_posterior_theta(&inst.theta, &inst.panel, &inst.mesh, &prior());
    let b = log_posterior_theta(&inst.theta, &permuted, &inst.mesh, &prior());
    assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn masked_rows_equal_deleted_rows() {
    // A location with every value missing contributes nothing.
    let inst = random_instance(12, 6, 3, 5, false);
    let mut locs = inst.panel.locations().to_vec();
    let mut vals = inst.panel.values().to_vec();
    locs.push([locs[0][0], locs[0][1]]);
    vals.push(vec![None; 3]);
    let padded = ObservationPanel::new(locs, inst.panel.times().to_vec(), vals).unwrap();
    let a = Model::new(inst.panel.clone(), &inst.mesh, prior()).unwrap();
    let b = Model::new(padded, &inst.mesh, prior()).unwrap();
    assert!(!b.has_spectral());
    let la = a.log_posterior(&inst.theta);
    let lb = b.log_posterior(&inst.theta);
    assert!((la - lb).abs() < 1e-9, "{la} vs {lb}");
}

#[test]
fn zero_data_gives_zero_mean() {
    let inst = random_instance(4, 5, 3, 4, false);
    let zeros = inst.panel.values().iter().map(|r| vec![0.0; r.len()]).collect();
    let panel = ObservationPanel::complete(inst.panel.locations().to_vec(), inst.panel.times().to_vec(), zeros).unwrap();
    let model = Model::new(panel, &inst.mesh, prior()).unwrap();
    let post = model.posterior_latent(&inst.theta).unwrap();
    assert!(post.mean.iter().all(|&v| v == 0.0));
}

#[test]
fn high_noise_precision_interpolates() {
    // Saturated design: every vertex observed at every time.
    let mesh = square_mesh();
    let locs = mesh.vertices().to_vec();
    let values: Vec<Vec<f64>> = (0..4).map(|i| vec![0.3 * i as f64, -0.5, 1.0 + i as f64]).collect();
    let panel = ObservationPanel::complete(locs, vec![-1.0, 0.0, 1.0], values.clone()).unwrap();
    let model = Model::new(panel, &mesh, prior()).unwrap();
    let mut theta = HyperParams::from_array([0.0, 0.3, 0.0, 0.0, 0.0, 0.0]);
    theta.log_prec_eps = 1e8f64.ln();
    let post = model.posterior_latent(&theta).unwrap();
    let a = model.design().unwrap();
    let fitted = a.matvec(&post.mean).unwrap();
    for (f, y) in fitted.iter().zip(values.iter().flatten()) {
        assert!((f - y).abs() < 1e-3);
    }
}

#[test]
fn time_scaling_rescales_trend() {
    // Scaling t by c while scaling the trend-field prior precision by c²
    // leaves the model for c·β unchanged, up to the vague β₀ prior.
    let inst = random_instance(21, 6, 4, 6, false);
    let c = 2.5;
    let scaled_times: Vec<f64> = inst.panel.times().iter().map(|t| t * c).collect();
    let scaled = ObservationPanel::new(
        inst.panel.locations().to_vec(),
        scaled_times,
        inst.panel.values().to_vec(),
    )
    .unwrap();
    let mut theta2 = inst.theta;
    theta2.log_tau_beta += c.ln();
    let m1 = Model::new(inst.panel.clone(), &inst.mesh, prior()).unwrap();
    let m2 = Model::new(scaled, &inst.mesh, prior()).unwrap();
    let t1 = m1.trend_posterior(&inst.theta).unwrap().vertex_means();
    let t2 = m2.trend_posterior(&theta2).unwrap().vertex_means();
    for (a, b) in t1.iter().zip(&t2) {
        assert!((a / c - b).abs() < 1e-5 * b.abs().max(1.0), "{a} {b}");
    }
}

#[test]
fn invalid_theta_is_minus_infinity() {
    let inst = random_instance(2, 5, 2, 4, false);
    let model = Model::new(inst.panel, &inst.mesh, prior()).unwrap();
    let mut theta = inst.theta;
    theta.log_tau_xi = f64::NAN;
    assert_eq!(model.log_posterior(&theta), f64::NEG_INFINITY);
    theta.log_tau_xi = 0.0;
    theta.log_kappa_beta = 800.0;
    assert_eq!(model.log_posterior(&theta), f64::NEG_INFINITY);
}

#[test]
fn routes_agree_on_larger_complete_panel() {
    let inst = random_instance(31, 8, 12, 30, false);
    let model = Model::new(inst.panel.clone(), &inst.mesh, prior()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        use rand::Rng;
        let theta = HyperParams::from_array(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let a = model.log_marginal_likelihood_sparse(&theta).unwrap();
        let b = model.log_marginal_likelihood_spectral(&theta).unwrap().unwrap();
        assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
        let ta = model.trend_posterior_sparse(&theta).unwrap();
        let tb = model.trend_posterior(&theta).unwrap();
        let diff: DMatrix<f64> = &ta.precision - &tb.precision;
        assert!(diff.abs().max() < 1e-8 * ta.precision.abs().max());
    }
}
