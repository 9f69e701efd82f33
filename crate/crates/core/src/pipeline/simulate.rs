use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::data::{AnomalyPanel, YearlyPanel};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::model::HyperParams;
use crate::sparse::{CholeskyFactor, Ordering};
use crate::spde::SpdeMatrices;

/// Standard deviation of the simulated global trend `β₀`.
pub const BETA0_SD: f64 = 10.0;

/// Synthetic anomalies with the latent values that generated them.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub anomalies: AnomalyPanel,
    pub theta: HyperParams,
    pub beta0: f64,
    /// `β̃` at the mesh vertices.
    pub beta: Vec<f64>,
    /// `τ̃` at the mesh vertices, one vector per year.
    pub tau: Vec<Vec<f64>>,
}

impl Simulation {
    /// Trend field `β₀ + β̃` at the vertices.
    pub fn trend_field(&self) -> Vec<f64> {
        self.beta.iter().map(|b| self.beta0 + b).collect()
    }
}

/// Draws one data set from the model at `theta`: `β̃ ~ N(0, Q_β⁻¹)`, the
/// residual field from its stationary AR(1) recursion in time, `β₀` from
/// `N(0, 10²)` and Gaussian noise, observed at `locations` in `years`.
pub fn simulate(theta: &HyperParams, mesh: &Mesh, locations: &[Point], years: &[i32], seed: u64) -> Result<Simulation> {
    simulate_with(theta, mesh, locations, years, seed, None)
}

/// As [`simulate`], optionally fixing `β₀`. The random stream is the same
/// either way.
pub fn simulate_with(
    theta: &HyperParams,
    mesh: &Mesh,
    locations: &[Point],
    years: &[i32],
    seed: u64,
    beta0: Option<f64>,
) -> Result<Simulation> {
    if !theta.is_finite() {
        return Err(Error::InvalidParameters("hyperparameters must be finite".into()));
    }
    if years.is_empty() || locations.is_empty() {
        return Err(Error::InvalidParameters("need at least one location and one year".into()));
    }
    let times = super::data::decade_times(years);
    let spde = SpdeMatrices::new(&mesh.fem_matrices()?)?;
    let projector = mesh.projector(locations)?.matrix;
    let q_beta = spde.precision(theta.kappa_beta(), theta.tau_beta())?;
    let q_xi = spde.precision(theta.kappa_xi(), theta.tau_xi())?;
    let f_beta = CholeskyFactor::new(&q_beta, &Ordering::MinimumDegree)?;
    let f_xi = CholeskyFactor::new(&q_xi, &Ordering::MinimumDegree)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn = BETA0_SD * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    let beta0 = beta0.unwrap_or(drawn);
    let beta = f_beta.sample_with(&mut rng);
    let phi = theta.phi();
    let marginal = 1.0 / (1.0 - phi * phi).sqrt();
    let mut tau: Vec<Vec<f64>> = Vec::with_capacity(years.len());
    for _ in years {
        let xi = f_xi.sample_with(&mut rng);
        let next = match tau.last() {
            None => xi.iter().map(|v| marginal * v).collect(),
            Some(prev) => prev.iter().zip(&xi).map(|(p, x)| phi * p + x).collect(),
        };
        tau.push(next);
    }

    let noise = Normal::new(0.0, (-0.5 * theta.log_prec_eps).exp())
        .map_err(|e| Error::InvalidParameters(format!("noise distribution: {e}")))?;
    let beta_at = projector.matvec(&beta)?;
    let tau_at: Vec<Vec<f64>> = tau.iter().map(|x| projector.matvec(x)).collect::<Result<_>>()?;
    let values = (0..locations.len())
        .map(|i| {
            (0..years.len())
                .map(|t| Some((beta0 + beta_at[i]) * times[t] + tau_at[t][i] + noise.sample(&mut rng)))
                .collect()
        })
        .collect();
    let panel = YearlyPanel::new(locations.to_vec(), years.to_vec(), values)?;
    Ok(Simulation {
        anomalies: AnomalyPanel::identity(panel),
        theta: *theta,
        beta0,
        beta,
        tau,
    })
}
