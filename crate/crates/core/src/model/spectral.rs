//! Closed-form evaluation for complete panels.
//!
//! With lumped mass `C`, the SPDE precision factors as
//! `Q = τ² C^{1/2} W (κ² + Γ)² Wᵀ C^{1/2}` where `W Γ Wᵀ` is the eigen
//! decomposition of `C^{-1/2} G C^{-1/2}`, fixed per mesh. Whitening each
//! residual field with that factor turns its prior into the identity, and
//! one more eigen decomposition of the whitened data term `ΨᵀΨ` decouples
//! the `G·m` residual unknowns into `G` independent tridiagonal `m × m`
//! systems `Q_AR + λ_k I`. What remains is a dense Schur complement on the
//! `G + 1` trend unknowns.

use nalgebra::{DMatrix, DVector};

use super::{HyperParams, ObservationPanel, BETA0_PRECISION, LN_2PI};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::spde::SpdeMatrices;

#[derive(Debug)]
pub(super) struct Spectral {
    g: usize,
    times: Vec<f64>,
    n_obs: f64,
    sum_log_c: f64,
    gamma: Vec<f64>,
    /// `Wᵀ C^{-1/2} ΨᵀΨ C^{-1/2} W`.
    k_tilde: DMatrix<f64>,
    /// `Wᵀ C^{-1/2} Ψᵀ H` with `H = [1 | Ψ]`.
    p_h: DMatrix<f64>,
    /// `Wᵀ C^{-1/2} Ψᵀ Y`, one column per time.
    y_w: DMatrix<f64>,
    hth: DMatrix<f64>,
    /// `Hᵀ Y t`.
    hty_t: DVector<f64>,
    yty: f64,
    tt: f64,
}

pub(super) struct SpectralEval {
    pub log_lik: f64,
    pub trend_mean: DVector<f64>,
    pub trend_precision: DMatrix<f64>,
}

impl Spectral {
    pub fn new(panel: &ObservationPanel, projector: &SparseMatrix, spde: &SpdeMatrices) -> Result<Self> {
        let g = spde.dim();
        let n = panel.n_locations();
        let m = panel.n_times();
        let c = spde.mass_diag();
        let c_isqrt: Vec<f64> = c.iter().map(|v| 1.0 / v.sqrt()).collect();

        let gd = spde.stiffness().to_dense();
        let mt = DMatrix::from_fn(g, g, |i, j| c_isqrt[i] * gd[(i, j)] * c_isqrt[j]);
        let eig = mt.symmetric_eigen();
        let w = eig.eigenvectors;
        let gamma: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        // S = Wᵀ C^{-1/2}, applied to Ψᵀ·(…).
        let s = DMatrix::from_fn(g, g, |k, i| w[(i, k)] * c_isqrt[i]);

        let psi = projector.to_dense();
        let mut h = DMatrix::zeros(n, g + 1);
        h.column_mut(0).fill(1.0);
        h.view_mut((0, 1), (n, g)).copy_from(&psi);
        let y = DMatrix::from_fn(n, m, |i, t| panel.values()[i][t].expect("complete panel"));
        let t = DVector::from_column_slice(panel.times());

        let psi_t_psi = psi.transpose() * &psi;
        let k_tilde = &s * psi_t_psi * s.transpose();
        let p_h = &s * (psi.transpose() * &h);
        let y_w = &s * (psi.transpose() * &y);
        let hth = h.transpose() * &h;
        let hty_t = h.transpose() * (&y * &t);
        Ok(Self {
            g,
            times: panel.times().to_vec(),
            n_obs: (n * m) as f64,
            sum_log_c: c.iter().map(|v| v.ln()).sum(),
            gamma,
            k_tilde,
            p_h,
            y_w,
            hth,
            hty_t,
            yty: y.iter().map(|v| v * v).sum(),
            tt: t.dot(&t),
        })
    }

    fn spde_log_det(&self, kappa: f64, tau: f64) -> f64 {
        let k2 = kappa * kappa;
        2.0 * self.g as f64 * tau.ln() + self.sum_log_c + 2.0 * self.gamma.iter().map(|gm| (k2 + gm).ln()).sum::<f64>()
    }

    /// `q_beta` is the dense SPDE precision of the trend field at θ.
    pub fn evaluate(&self, theta: &HyperParams, q_beta: &DMatrix<f64>) -> Result<SpectralEval> {
        let g = self.g;
        let m = self.times.len();
        let p = theta.prec_eps();
        let phi = theta.phi();
        let k2 = theta.kappa_xi().powi(2);
        let tau_xi = theta.tau_xi();

        let dinv: Vec<f64> = self.gamma.iter().map(|gm| 1.0 / (k2 + gm)).collect();
        let scale = p / (tau_xi * tau_xi);
        let mmat = DMatrix::from_fn(g, g, |i, j| scale * dinv[i] * self.k_tilde[(i, j)] * dinv[j]);
        let eig = mmat.symmetric_eigen();
        let u = eig.eigenvectors;
        let lambda = eig.eigenvalues;

        // Uᵀ D⁻¹ (·) scaled by p / τ.
        let ud = DMatrix::from_fn(g, g, |k, i| u[(i, k)] * dinv[i] * (p / tau_xi));
        let dmat = &ud * &self.p_h;
        let wz = &ud * &self.y_w;

        let mut c = vec![0.0; g];
        let mut e = vec![0.0; g];
        let mut f_sum = 0.0;
        let mut log_det_b = 0.0;
        let mut lt = vec![0.0; m];
        let mut lw = vec![0.0; m];
        for k in 0..g {
            let lam = lambda[k].max(0.0);
            let w_row: Vec<f64> = (0..m).map(|t| wz[(k, t)]).collect();
            let ld = tridiagonal_solve(phi, lam, &self.times, &w_row, &mut lt, &mut lw)?;
            log_det_b += ld;
            c[k] = lt.iter().map(|v| v * v).sum();
            e[k] = lt.iter().zip(&lw).map(|(a, b)| a * b).sum();
            f_sum += lw.iter().map(|v| v * v).sum::<f64>();
        }

        let mut qbb = &self.hth * (p * self.tt);
        qbb[(0, 0)] += BETA0_PRECISION;
        qbb.view_mut((1, 1), (g, g)).add_assign_from(q_beta);
        let mut scaled = dmat.clone();
        for k in 0..g {
            scaled.row_mut(k).scale_mut(c[k]);
        }
        let s = qbb - dmat.transpose() * &scaled;
        let s = (&s + s.transpose()) * 0.5;
        let r_b = &self.hty_t * p;
        let r_tilde = r_b - dmat.transpose() * DVector::from_vec(e);
        let chol = s
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?;
        let log_det_s = 2.0 * chol.l_dirty().diagonal().iter().take(g + 1).map(|v| v.ln()).sum::<f64>();
        let trend_mean = chol.solve(&r_tilde);
        let quad = f_sum + r_tilde.dot(&trend_mean);

        let log_det_qb = self.spde_log_det(theta.kappa_beta(), theta.tau_beta());
        let log_prior = BETA0_PRECISION.ln() + log_det_qb + g as f64 * (1.0 - phi * phi).ln();
        // The m·log|Q_ξ| terms of prior and posterior cancel.
        let log_post = log_det_b + log_det_s;
        let n = self.n_obs;
        let log_lik = 0.5 * log_prior + 0.5 * n * theta.log_prec_eps
            - 0.5 * log_post
            - 0.5 * (p * self.yty - quad)
            - 0.5 * n * LN_2PI;
        Ok(SpectralEval {
            log_lik,
            trend_mean,
            trend_precision: s,
        })
    }
}

trait AddAssignFrom {
    fn add_assign_from(&mut self, other: &DMatrix<f64>);
}

impl AddAssignFrom for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_from(&mut self, other: &DMatrix<f64>) {
        for j in 0..other.ncols() {
            for i in 0..other.nrows() {
                self[(i, j)] += other[(i, j)];
            }
        }
    }
}

/// Cholesky of `B = Q_AR(φ) + λ I`; writes `L⁻¹ t` and `L⁻¹ w` and returns
/// `log |B|`.
fn tridiagonal_solve(phi: f64, lambda: f64, t: &[f64], w: &[f64], lt: &mut [f64], lw: &mut [f64]) -> Result<f64> {
    let m = t.len();
    let diag = |i: usize| {
        if m == 1 {
            1.0 - phi * phi
        } else if i == 0 || i == m - 1 {
            1.0
        } else {
            1.0 + phi * phi
        }
    } + lambda;
    let mut log_det = 0.0;
    let mut prev_l = 0.0;
    for i in 0..m {
        let sub = if i == 0 { 0.0 } else { -phi / prev_l };
        let d = diag(i) - sub * sub;
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: i, value: d });
        }
        let l = d.sqrt();
        log_det += 2.0 * l.ln();
        if i == 0 {
            lt[0] = t[0] / l;
            lw[0] = w[0] / l;
        } else {
            lt[i] = (t[i] - sub * lt[i - 1]) / l;
            lw[i] = (w[i] - sub * lw[i - 1]) / l;
        }
        prev_l = l;
    }
    Ok(log_det)
}
