#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trendfield::mesh::{Mesh, Point};
use trendfield::model::{HyperParams, ObservationPanel, BETA0_PRECISION};

pub struct Instance {
    pub mesh: Mesh,
    pub panel: ObservationPanel,
    pub theta: HyperParams,
}

/// Random small instance: mesh of `g` scattered points, `n` locations
/// inside it, `m` centered times, optional missing values.
pub fn random_instance(seed: u64, g: usize, m: usize, n: usize, missing: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = loop {
        let pts: Vec<Point> = (0..g)
            .map(|_| [rng.random_range(0.0..4.0), rng.random_range(0.0..3.0)])
            .collect();
        if let Ok(mesh) = Mesh::from_points(&pts) {
            if mesh.n_vertices() == g && (0..mesh.n_triangles()).all(|t| mesh.triangle_area(t) > 0.05) {
                break mesh;
            }
        }
    };
    let locations: Vec<Point> = (0..n)
        .map(|_| {
            let t = mesh.triangles()[rng.random_range(0..mesh.n_triangles())];
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
            let v = t.map(|i| mesh.vertices()[i]);
            [
                v[0][0] + a * (v[1][0] - v[0][0]) + b * (v[2][0] - v[0][0]),
                v[0][1] + a * (v[1][1] - v[0][1]) + b * (v[2][1] - v[0][1]),
            ]
        })
        .collect();
    let times: Vec<f64> = (0..m).map(|t| (t as f64 - (m as f64 - 1.0) / 2.0) * 0.3).collect();
    let mut values: Vec<Vec<Option<f64>>> = (0..n)
        .map(|_| (0..m).map(|_| Some(rng.random_range(-2.0..2.0))).collect())
        .collect();
    if missing {
        for row in values.iter_mut() {
            for v in row.iter_mut() {
                if rng.random::<f64>() < 0.2 {
                    *v = None;
                }
            }
        }
        values[0][0] = Some(0.5);
    }
    let theta = HyperParams::from_array([
        rng.random_range(-0.5..1.5),
        rng.random_range(-1.5..1.5),
        rng.random_range(-0.5..0.8),
        rng.random_range(-1.0..0.5),
        rng.random_range(-0.5..0.8),
        rng.random_range(-1.0..0.5),
    ]);
    Instance {
        mesh,
        panel: ObservationPanel::new(locations, times, values).unwrap(),
        theta,
    }
}

/// Dense SPDE precision from the element formulas.
pub fn dense_spde(mesh: &Mesh, kappa: f64, tau: f64) -> DMatrix<f64> {
    let g = mesh.n_vertices();
    let mut c = DMatrix::zeros(g, g);
    let mut k = DMatrix::zeros(g, g);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = tri.map(|v| mesh.vertices()[v]);
        let area = mesh.triangle_area(t);
        for a in 0..3 {
            c[(tri[a], tri[a])] += area / 3.0;
            for b in 0..3 {
                // Gradient of the barycentric coordinate of a.
                let grad = |i: usize| {
                    let (j, l) = ((i + 1) % 3, (i + 2) % 3);
                    [(p[j][1] - p[l][1]) / (2.0 * area), (p[l][0] - p[j][0]) / (2.0 * area)]
                };
                let (ga, gb) = (grad(a), grad(b));
                k[(tri[a], tri[b])] += area * (ga[0] * gb[0] + ga[1] * gb[1]);
            }
        }
    }
    let cinv = DMatrix::from_diagonal(&c.diagonal().map(|v| 1.0 / v));
    (&c * kappa.powi(4) + &k * (2.0 * kappa * kappa) + &k * cinv * &k) * (tau * tau)
}

pub fn dense_ar1(phi: f64, m: usize) -> DMatrix<f64> {
    // Inverse of the stationary covariance φ^|i−j| / (1 − φ²).
    DMatrix::from_fn(m, m, |i, j| phi.powi(i.abs_diff(j) as i32) / (1.0 - phi * phi))
        .try_inverse()
        .unwrap()
}

pub struct DenseOracle {
    pub log_lik: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Dense joint-Gaussian computations for the model on an instance.
pub fn dense_oracle(inst: &Instance) -> DenseOracle {
    let mesh = &inst.mesh;
    let theta = &inst.theta;
    let g = mesh.n_vertices();
    let m = inst.panel.n_times();
    let dim = 1 + g + g * m;
    let qb = dense_spde(mesh, theta.kappa_beta(), theta.tau_beta());
    let qx = dense_spde(mesh, theta.kappa_xi(), theta.tau_xi());
    let qt = dense_ar1(theta.phi(), m).kronecker(&qx);
    let mut cov_x = DMatrix::zeros(dim, dim);
    cov_x[(0, 0)] = 1.0 / BETA0_PRECISION;
    cov_x.view_mut((1, 1), (g, g)).copy_from(&qb.try_inverse().unwrap());
    cov_x
        .view_mut((1 + g, 1 + g), (g * m, g * m))
        .copy_from(&qt.try_inverse().unwrap());

    let psi = mesh.projector(inst.panel.locations()).unwrap().matrix.to_dense();
    let obs: Vec<(usize, usize, f64)> = inst.panel.observations().collect();
    let mut a = DMatrix::zeros(obs.len(), dim);
    for (r, &(i, t, _)) in obs.iter().enumerate() {
        let time = inst.panel.times()[t];
        a[(r, 0)] = time;
        for v in 0..g {
            a[(r, 1 + v)] = time * psi[(i, v)];
            a[(r, 1 + g + t * g + v)] = psi[(i, v)];
        }
    }
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.2));
    let n = obs.len();
    let sigma_y = &a * &cov_x * a.transpose() + DMatrix::identity(n, n) / theta.prec_eps();
    let chol = sigma_y.clone().cholesky().unwrap();
    let alpha = chol.solve(&y);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_lik = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let k = &cov_x * a.transpose();
    let mean = &k * &alpha;
    let cov = &cov_x - &k * chol.solve(&k.transpose());
    DenseOracle { log_lik, mean, cov }
}
