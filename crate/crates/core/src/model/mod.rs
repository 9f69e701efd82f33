//! The latent Gaussian space-time trend model.
//!
//! Observations follow `y_st = (β₀ + β(s)) t + τ_st + ε_st`, where `β` is a
//! Matérn field, `τ_t = φ τ_{t−1} + ξ_t` with Matérn innovations `ξ_t`, and
//! `ε` is white noise. Both fields are represented on a mesh through the
//! piecewise-linear basis, giving the latent vector
//! `x = [β₀ | β̃ (G) | τ̃₁ … τ̃_m (G each)]`.
//!
//! Because the likelihood is Gaussian, `x` integrates out exactly and the
//! hyperparameter posterior is available in closed form up to a constant.
//! Two numerically independent routes evaluate it: a general sparse
//! Cholesky route, and for complete panels a spectral route that
//! diagonalises the space-time block once per mesh (see [`spectral`]).

mod hyper;
mod spectral;

pub use hyper::{
    phi_from_internal, phi_to_internal, HyperParams, HyperPrior, NaturalParams, DEFAULT_PRIOR_SD, HYPER_NAMES,
    N_HYPER,
};

use std::ops::Range;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::sparse::{CholeskyFactor, Ordering, SparseMatrix, SparseSymmetric, SymbolicCholesky};
use crate::spde::SpdeMatrices;
use crate::timeseries::{ar1_precision, kron_precision, Ar1Params};
use spectral::Spectral;

/// Fixed prior precision of the global trend `β₀`.
pub const BETA0_PRECISION: f64 = 1e-6;

const LN_2PI: f64 = 1.8378770664093453;

/// Index ranges of the latent vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentLayout {
    pub g: usize,
    pub m: usize,
}

impl LatentLayout {
    pub fn beta0(&self) -> usize {
        0
    }

    pub fn beta(&self) -> Range<usize> {
        1..1 + self.g
    }

    /// Residual field at time index `t`.
    pub fn tau(&self, t: usize) -> Range<usize> {
        let start = 1 + self.g + t * self.g;
        start..start + self.g
    }

    /// `[β₀ | β̃]`.
    pub fn trend(&self) -> Range<usize> {
        0..1 + self.g
    }

    pub fn dim(&self) -> usize {
        1 + self.g + self.g * self.m
    }
}

/// Anomalies at `n` locations and `m` equally spaced times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPanel {
    locations: Vec<Point>,
    times: Vec<f64>,
    /// `values[i][t]`, `None` where missing.
    values: Vec<Vec<Option<f64>>>,
}

impl ObservationPanel {
    pub fn new(locations: Vec<Point>, times: Vec<f64>, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if locations.is_empty() || times.is_empty() {
            return Err(Error::InvalidParameters("panel needs locations and times".into()));
        }
        if values.len() != locations.len() {
            return Err(Error::DimensionMismatch {
                expected: locations.len(),
                found: values.len(),
            });
        }
        if let Some(row) = values.iter().find(|r| r.len() != times.len()) {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: row.len(),
            });
        }
        if times.len() > 1 {
            let step = times[1] - times[0];
            let ok = step > 0.0
                && times
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1.0));
            if !ok {
                return Err(Error::InvalidParameters(
                    "times must be strictly increasing and equally spaced".into(),
                ));
            }
        }
        if values.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("observations must be finite".into()));
        }
        if values.iter().flatten().all(|v| v.is_none()) {
            return Err(Error::InvalidParameters("panel has no observations".into()));
        }
        Ok(Self {
            locations,
            times,
            values,
        })
    }

    /// Complete panel from a dense `n × m` matrix.
    pub fn complete(locations: Vec<Point>, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(|r| r.into_iter().map(Some).collect())
            .collect();
        Self::new(locations, times, values)
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<Option<f64>>] {
        &self.values
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_obs(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_some())
    }

    /// Observed `(location, time index, value)` triples, location-major.
    pub fn observations(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter_map(move |(t, v)| v.map(|v| (i, t, v))))
    }
}

/// Design matrix mapping the latent vector to the linear predictor of every
/// observation, in [`ObservationPanel::observations`] order.
pub fn assemble_design(panel: &ObservationPanel, projector: &SparseMatrix, layout: &LatentLayout) -> Result<SparseMatrix> {
    if projector.rows() != panel.n_locations() || projector.cols() != layout.g {
        return Err(Error::DimensionMismatch {
            expected: panel.n_locations(),
            found: projector.rows(),
        });
    }
    let mut triplets = Vec::new();
    for (row, (i, t, _)) in panel.observations().enumerate() {
        let time = panel.times()[t];
        let (cols, w) = projector.row(i);
        if time != 0.0 {
            triplets.push((row, layout.beta0(), time));
            for (&g, &v) in cols.iter().zip(w) {
                triplets.push((row, layout.beta().start + g, time * v));
            }
        }
        for (&g, &v) in cols.iter().zip(w) {
            triplets.push((row, layout.tau(t).start + g, v));
        }
    }
    SparseMatrix::from_triplets(panel.n_obs(), layout.dim(), triplets)
}

/// Conditional posterior of the full latent vector for one θ.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub layout: LatentLayout,
    pub mean: Vec<f64>,
    pub factor: CholeskyFactor,
}

impl GaussianPosterior {
    pub fn marginal_variances(&self) -> Vec<f64> {
        self.factor.marginal_variances()
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = self.factor.sample_with(rng);
        x.iter_mut().zip(&self.mean).for_each(|(a, m)| *a += m);
        x
    }
}

/// Posterior of `b = [β₀ | β̃]` for one θ, with the trend field at vertex
/// `g` being `β₀ + β̃_g`.
#[derive(Debug, Clone)]
pub struct TrendPosterior {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    /// Upper-triangular `Lᵀ` with `precision = L Lᵀ`.
    upper: DMatrix<f64>,
}

impl TrendPosterior {
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let chol = precision
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?;
        let upper = chol.l().transpose();
        Ok(Self { mean, precision, upper })
    }

    pub fn n_vertices(&self) -> usize {
        self.mean.len() - 1
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        // (L Lᵀ)⁻¹ = L⁻ᵀ L⁻¹.
        let n = self.mean.len();
        let linv_t = self
            .upper
            .clone()
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .expect("triangular factor has a positive diagonal");
        &linv_t * linv_t.transpose()
    }

    pub fn vertex_means(&self) -> Vec<f64> {
        (1..self.mean.len()).map(|g| self.mean[0] + self.mean[g]).collect()
    }

    pub fn vertex_variances(&self) -> Vec<f64> {
        let cov = self.covariance();
        (1..self.mean.len())
            .map(|g| cov[(0, 0)] + 2.0 * cov[(0, g)] + cov[(g, g)])
            .collect()
    }

    /// One draw of the trend field at the vertices, written into `out`.
    pub fn sample_vertices_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let n = self.mean.len();
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        // Back substitution with Lᵀ.
        for i in (0..n).rev() {
            let mut s = z[i];
            for j in i + 1..n {
                s -= self.upper[(i, j)] * z[j];
            }
            z[i] = s / self.upper[(i, i)];
        }
        let b0 = self.mean[0] + z[0];
        for g in 1..n {
            out[g - 1] = b0 + self.mean[g] + z[g];
        }
    }
}

/// Data, mesh quantities and cached structure for evaluating the posterior.
#[derive(Debug)]
pub struct Model {
    panel: ObservationPanel,
    layout: LatentLayout,
    projector: SparseMatrix,
    spde: SpdeMatrices,
    prior: HyperPrior,
    y: Vec<f64>,
    ata: SparseSymmetric,
    aty: Vec<f64>,
    yty: f64,
    symbolic: OnceLock<SymbolicCholesky>,
    symbolic_trailing: OnceLock<SymbolicCholesky>,
    spectral: Option<Spectral>,
}

impl Model {
    /// Builds the model; complete panels also get the spectral route.
    pub fn new(panel: ObservationPanel, mesh: &Mesh, prior: HyperPrior) -> Result<Self> {
        prior.validate()?;
        let projector = mesh.projector(panel.locations())?.matrix;
        let fem = mesh.fem_matrices()?;
        let spde = SpdeMatrices::new(&fem)?;
        let layout = LatentLayout {
            g: mesh.n_vertices(),
            m: panel.n_times(),
        };
        let design = assemble_design(&panel, &projector, &layout)?;
        let y: Vec<f64> = panel.observations().map(|o| o.2).collect();
        let ata = design.gram()?;
        let aty = design.transpose_matvec(&y)?;
        let yty = y.iter().map(|v| v * v).sum();
        let spectral = if panel.is_complete() {
            Some(Spectral::new(&panel, &projector, &spde)?)
        } else {
            None
        };
        Ok(Self {
            panel,
            layout,
            projector,
            spde,
            prior,
            y,
            ata,
            aty,
            yty,
            symbolic: OnceLock::new(),
            symbolic_trailing: OnceLock::new(),
            spectral,
        })
    }

    /// Drops the spectral route so every evaluation uses sparse Cholesky.
    pub fn without_spectral(mut self) -> Self {
        self.spectral = None;
        self
    }

    pub fn has_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    pub fn panel(&self) -> &ObservationPanel {
        &self.panel
    }

    pub fn layout(&self) -> LatentLayout {
        self.layout
    }

    pub fn projector(&self) -> &SparseMatrix {
        &self.projector
    }

    pub fn prior(&self) -> &HyperPrior {
        &self.prior
    }

    pub fn spde(&self) -> &SpdeMatrices {
        &self.spde
    }

    /// Observed values in design-row order.
    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn design(&self) -> Result<SparseMatrix> {
        assemble_design(&self.panel, &self.projector, &self.layout)
    }

    fn ar1(&self, theta: &HyperParams) -> Result<SparseSymmetric> {
        ar1_precision(&Ar1Params::new(theta.phi(), self.layout.m)?)
    }

    /// Block-diagonal prior precision of the latent vector.
    pub fn prior_precision(&self, theta: &HyperParams) -> Result<SparseSymmetric> {
        let b0 = SparseSymmetric::from_diagonal(&[BETA0_PRECISION])?;
        let qb = self.spde.precision(theta.kappa_beta(), theta.tau_beta())?;
        let qx = self.spde.precision(theta.kappa_xi(), theta.tau_xi())?;
        let qt = kron_precision(&self.ar1(theta)?, &qx);
        SparseSymmetric::block_diagonal(&[&b0, &qb, &qt])
    }

    /// `log |Q_prior|` from the block structure.
    pub fn prior_log_det(&self, theta: &HyperParams) -> Result<f64> {
        let qb = self.spde.precision(theta.kappa_beta(), theta.tau_beta())?;
        let qx = self.spde.precision(theta.kappa_xi(), theta.tau_xi())?;
        let lb = CholeskyFactor::new(&qb, &Ordering::MinimumDegree)?.log_det();
        let lx = CholeskyFactor::new(&qx, &Ordering::MinimumDegree)?.log_det();
        let phi = theta.phi();
        let (g, m) = (self.layout.g as f64, self.layout.m as f64);
        Ok(BETA0_PRECISION.ln() + lb + g * (1.0 - phi * phi).ln() + m * lx)
    }

    fn posterior_precision(&self, theta: &HyperParams) -> Result<SparseSymmetric> {
        let q = self.prior_precision(theta)?;
        SparseSymmetric::linear_combination(&[(1.0, &q), (theta.prec_eps(), &self.ata)])
    }

    fn factor_posterior(&self, theta: &HyperParams, trailing: bool) -> Result<CholeskyFactor> {
        let q = self.posterior_precision(theta)?;
        let cell = if trailing {
            &self.symbolic_trailing
        } else {
            &self.symbolic
        };
        let sym = match cell.get() {
            Some(s) => s.clone(),
            None => {
                let ordering = if trailing {
                    Ordering::MinimumDegreeTrailing(self.layout.trend().collect())
                } else {
                    Ordering::MinimumDegree
                };
                let s = SymbolicCholesky::analyze(&q, &ordering)?;
                cell.get_or_init(|| s).clone()
            }
        };
        sym.factorize(&q)
    }

    /// `log π(y | θ)` through sparse Cholesky of the full posterior
    /// precision.
    pub fn log_marginal_likelihood_sparse(&self, theta: &HyperParams) -> Result<f64> {
        let p = theta.prec_eps();
        let f = self.factor_posterior(theta, false)?;
        let r: Vec<f64> = self.aty.iter().map(|v| p * v).collect();
        let mu = f.solve(&r)?;
        let quad = p * self.yty - r.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>();
        let n = self.y.len() as f64;
        Ok(0.5 * self.prior_log_det(theta)? + 0.5 * n * theta.log_prec_eps - 0.5 * f.log_det() - 0.5 * quad - 0.5 * n * LN_2PI)
    }

    /// `log π(y | θ)` through the spectral route, if available.
    pub fn log_marginal_likelihood_spectral(&self, theta: &HyperParams) -> Option<Result<f64>> {
        let s = self.spectral.as_ref()?;
        Some(self.dense_beta_precision(theta).and_then(|qb| s.evaluate(theta, &qb)).map(|e| e.log_lik))
    }

    pub fn log_marginal_likelihood(&self, theta: &HyperParams) -> Result<f64> {
        match self.log_marginal_likelihood_spectral(theta) {
            Some(r) => r,
            None => self.log_marginal_likelihood_sparse(theta),
        }
    }

    /// `log π(θ | y)` up to a constant; `−∞` where θ is invalid or a
    /// factorization fails.
    pub fn log_posterior(&self, theta: &HyperParams) -> f64 {
        if !theta.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self.log_marginal_likelihood(theta) {
            Ok(v) if v.is_finite() => v + self.prior.log_density(theta),
            _ => f64::NEG_INFINITY,
        }
    }

    /// As [`Model::log_posterior`], forcing the sparse route.
    pub fn log_posterior_sparse(&self, theta: &HyperParams) -> f64 {
        if !theta.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self.log_marginal_likelihood_sparse(theta) {
            Ok(v) if v.is_finite() => v + self.prior.log_density(theta),
            _ => f64::NEG_INFINITY,
        }
    }

    /// Conditional posterior of the full latent vector.
    pub fn posterior_latent(&self, theta: &HyperParams) -> Result<GaussianPosterior> {
        let p = theta.prec_eps();
        let factor = self.factor_posterior(theta, false)?;
        let r: Vec<f64> = self.aty.iter().map(|v| p * v).collect();
        let mean = factor.solve(&r)?;
        Ok(GaussianPosterior {
            layout: self.layout,
            mean,
            factor,
        })
    }

    fn dense_beta_precision(&self, theta: &HyperParams) -> Result<DMatrix<f64>> {
        Ok(self.spde.precision(theta.kappa_beta(), theta.tau_beta())?.to_dense())
    }

    /// Posterior of `[β₀ | β̃]`, spectral route when available.
    pub fn trend_posterior(&self, theta: &HyperParams) -> Result<TrendPosterior> {
        match &self.spectral {
            Some(s) => {
                let e = s.evaluate(theta, &self.dense_beta_precision(theta)?)?;
                TrendPosterior::new(e.trend_mean, e.trend_precision)
            }
            None => self.trend_posterior_sparse(theta),
        }
    }

    /// Posterior of `[β₀ | β̃]` from a sparse factorization that eliminates
    /// the trend block last.
    pub fn trend_posterior_sparse(&self, theta: &HyperParams) -> Result<TrendPosterior> {
        let p = theta.prec_eps();
        let f = self.factor_posterior(theta, true)?;
        let r: Vec<f64> = self.aty.iter().map(|v| p * v).collect();
        let mu = f.solve(&r)?;
        let k = self.layout.g + 1;
        let prec = f.trailing_precision(k)?;
        let mean = DVector::from_iterator(k, self.layout.trend().map(|i| mu[i]));
        TrendPosterior::new(mean, prec)
    }
}

/// Convenience wrapper building a [`Model`] for a single evaluation.
pub fn log_posterior_theta(theta: &HyperParams, panel: &ObservationPanel, mesh: &Mesh, prior: &HyperPrior) -> f64 {
    match Model::new(panel.clone(), mesh, *prior) {
        Ok(m) => m.log_posterior(theta),
        Err(_) => f64::NEG_INFINITY,
    }
}
