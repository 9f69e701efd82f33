//! Matérn covariance with smoothness ν = 1 in two dimensions and its
//! Markov approximation through the SPDE `(κ² − Δ) (τ x) = W`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::FemMatrices;
use crate::sparse::SparseSymmetric;

/// SPDE order; with `d = 2` this fixes the Matérn smoothness at one.
pub const ALPHA: f64 = 2.0;
pub const NU: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub sigma2: f64,
    pub kappa: f64,
}

impl MaternParams {
    pub fn new(sigma2: f64, kappa: f64) -> Result<Self> {
        positive("sigma2", sigma2)?;
        positive("kappa", kappa)?;
        Ok(Self { sigma2, kappa })
    }

    pub fn range(&self) -> f64 {
        8f64.sqrt() / self.kappa
    }

    pub fn tau(&self) -> f64 {
        1.0 / (2.0 * self.kappa * (PI * self.sigma2).sqrt())
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

/// Modified Bessel function of the second kind, order one, for `x > 0`.
///
/// Trapezoidal rule on `K₁(x) = ∫₀^∞ exp(−x cosh t) cosh t dt`; the
/// integrand is analytic in a strip and decays doubly exponentially, so the
/// rule converges geometrically in the step size.
pub fn bessel_k1(x: f64) -> f64 {
    if !(x > 0.0) {
        return if x == 0.0 { f64::INFINITY } else { f64::NAN };
    }
    if x > 700.0 {
        return 0.0;
    }
    let h = 0.05;
    // Factor out exp(−x) so large arguments do not underflow early.
    let mut sum = 0.5;
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        let c = t.cosh();
        let e = x * (c - 1.0);
        if e > 45.0 {
            break;
        }
        sum += (-e).exp() * c;
        k += 1;
    }
    sum * h * (-x).exp()
}

/// Matérn covariance at distance `dist`: `σ² κd K₁(κd)`.
pub fn matern_cov(dist: f64, p: &MaternParams) -> f64 {
    p.sigma2 * matern_corr(dist, p.kappa)
}

/// Matérn correlation with ν = 1.
pub fn matern_corr(dist: f64, kappa: f64) -> f64 {
    let r = kappa * dist.abs();
    if r < 1e-12 {
        1.0
    } else {
        r * bessel_k1(r)
    }
}

/// Marginal variance `1 / (4π κ² τ²)`.
pub fn sigma2_from(kappa: f64, tau: f64) -> Result<f64> {
    positive("kappa", kappa)?;
    positive("tau", tau)?;
    Ok(1.0 / (4.0 * PI * kappa * kappa * tau * tau))
}

/// Inverse of [`sigma2_from`] in `τ`.
pub fn tau_from(kappa: f64, sigma2: f64) -> Result<f64> {
    positive("kappa", kappa)?;
    positive("sigma2", sigma2)?;
    Ok(1.0 / (2.0 * kappa * (PI * sigma2).sqrt()))
}

/// Range `√8 / κ`, the distance at which the correlation is about 0.14.
pub fn range_from(kappa: f64) -> Result<f64> {
    positive("kappa", kappa)?;
    Ok(8f64.sqrt() / kappa)
}

pub fn kappa_from(range: f64) -> Result<f64> {
    positive("range", range)?;
    Ok(8f64.sqrt() / range)
}

/// The three fixed matrices whose combination gives the SPDE precision on
/// one mesh, all sharing a single sparsity pattern.
#[derive(Debug, Clone)]
pub struct SpdeMatrices {
    c: SparseSymmetric,
    g: SparseSymmetric,
    g2: SparseSymmetric,
    mass_diag: Vec<f64>,
}

impl SpdeMatrices {
    pub fn new(fem: &FemMatrices) -> Result<Self> {
        let g2 = stiffness_squared(&fem.stiffness, &fem.mass_diag)?;
        let c0 = fem.mass();
        // Pad every term to the common pattern so linear combinations keep it.
        let zero = g2.scaled(0.0);
        let c = SparseSymmetric::linear_combination(&[(1.0, &c0), (0.0, &zero)])?;
        let g = SparseSymmetric::linear_combination(&[(1.0, &fem.stiffness), (0.0, &zero)])?;
        let g2 = SparseSymmetric::linear_combination(&[(1.0, &g2), (0.0, &c0)])?;
        Ok(Self {
            c,
            g,
            g2,
            mass_diag: fem.mass_diag.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mass_diag.len()
    }

    pub fn mass_diag(&self) -> &[f64] {
        &self.mass_diag
    }

    pub fn mass(&self) -> &SparseSymmetric {
        &self.c
    }

    pub fn stiffness(&self) -> &SparseSymmetric {
        &self.g
    }

    /// `G C⁻¹ G`.
    pub fn stiffness_squared(&self) -> &SparseSymmetric {
        &self.g2
    }

    /// `τ² (κ⁴ C + 2κ² G + G C⁻¹ G)`.
    pub fn precision(&self, kappa: f64, tau: f64) -> Result<SparseSymmetric> {
        positive("kappa", kappa)?;
        positive("tau", tau)?;
        let t2 = tau * tau;
        let k2 = kappa * kappa;
        SparseSymmetric::linear_combination(&[
            (t2 * k2 * k2, &self.c),
            (2.0 * t2 * k2, &self.g),
            (t2, &self.g2),
        ])
    }
}

/// SPDE precision for one `(κ, τ)`; see [`SpdeMatrices`] for repeated use.
pub fn spde_precision(kappa: f64, tau: f64, fem: &FemMatrices) -> Result<SparseSymmetric> {
    SpdeMatrices::new(fem)?.precision(kappa, tau)
}

fn stiffness_squared(g: &SparseSymmetric, c: &[f64]) -> Result<SparseSymmetric> {
    let n = g.dim();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, v) in g.entries() {
        rows[i].push((j, v));
        if i != j {
            rows[j].push((i, v));
        }
    }
    let mut triplets = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        for &(i, a) in row {
            for &(j, b) in row {
                if i >= j {
                    triplets.push((i, j, a * b / c[k]));
                }
            }
        }
    }
    SparseSymmetric::from_triplets(n, triplets)
}
