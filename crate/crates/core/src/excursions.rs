//! Pointwise, simultaneous and Bonferroni credible bands for the trend
//! field and their avoidance excursion sets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{FieldMarginals, Samples};

/// Smallest sample count accepted by [`simultaneous_band`].
pub const MIN_SAMPLES: usize = 1000;
/// Default tolerance on the joint coverage.
pub const DEFAULT_TOL: f64 = 0.002;
/// Bracket widenings allowed below `α / (20 G)`.
const MAX_WIDENINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandMethod {
    Pointwise,
    Simultaneous,
    Bonferroni,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandResult {
    pub alpha: f64,
    /// Per-cell tail probability of the band.
    pub band_rho: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub avoid_set: Vec<bool>,
    pub method: BandMethod,
    /// Monte Carlo joint coverage and its standard error, simultaneous
    /// bands only.
    pub coverage_estimate: Option<f64>,
    pub coverage_se: Option<f64>,
}

impl BandResult {
    fn build(alpha: f64, band_rho: f64, lower: Vec<f64>, upper: Vec<f64>, method: BandMethod, u: f64) -> Self {
        let avoid_set = lower.iter().zip(&upper).map(|(l, h)| excludes(*l, *h, u)).collect();
        Self {
            alpha,
            band_rho,
            lower,
            upper,
            avoid_set,
            method,
            coverage_estimate: None,
            coverage_se: None,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.lower.len()
    }

    /// Multiplies all bounds by positive per-cell factors.
    pub fn rescaled(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cells(),
                found: factors.len(),
            });
        }
        if let Some(f) = factors.iter().find(|f| !(**f > 0.0)) {
            return Err(Error::NonPositiveParameter { name: "scale", value: *f });
        }
        let mut out = self.clone();
        out.lower.iter_mut().zip(factors).for_each(|(v, f)| *v *= f);
        out.upper.iter_mut().zip(factors).for_each(|(v, f)| *v *= f);
        Ok(out)
    }
}

fn excludes(lower: f64, upper: f64, u: f64) -> bool {
    upper < u || lower > u
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameters(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn band_at(marginals: &FieldMarginals, rho: f64) -> (Vec<f64>, Vec<f64>) {
    (marginals.quantiles(rho), marginals.quantiles(1.0 - rho))
}

/// Equi-tailed marginal intervals at level `1 − α`.
pub fn pointwise_band(marginals: &FieldMarginals, alpha: f64, u: f64) -> Result<BandResult> {
    check_alpha(alpha)?;
    let (lower, upper) = band_at(marginals, alpha / 2.0);
    Ok(BandResult::build(alpha, alpha / 2.0, lower, upper, BandMethod::Pointwise, u))
}

/// Pointwise band at the per-cell level `α / n_cells`.
pub fn bonferroni_band(marginals: &FieldMarginals, alpha: f64, n_cells: usize, u: f64) -> Result<BandResult> {
    check_alpha(alpha)?;
    if n_cells == 0 {
        return Err(Error::InvalidParameters("Bonferroni correction needs at least one cell".into()));
    }
    let rho = alpha / (2.0 * n_cells as f64);
    let (lower, upper) = band_at(marginals, rho);
    Ok(BandResult::build(alpha, rho, lower, upper, BandMethod::Bonferroni, u))
}

/// Fraction of draws lying strictly inside the band at every cell.
pub fn joint_coverage(samples: &Samples, lower: &[f64], upper: &[f64]) -> f64 {
    let rows: Vec<&[f64]> = samples.rows().collect();
    let inside: usize = rows
        .par_chunks(1024)
        .map(|chunk| {
            chunk
                .iter()
                .filter(|r| r.iter().zip(lower.iter().zip(upper)).all(|(x, (l, h))| l < x && x < h))
                .count()
        })
        .sum();
    inside as f64 / samples.n_samples() as f64
}

/// Band of the marginal quantiles `(q_ρ, q_{1−ρ})` with `ρ` chosen so that
/// the joint posterior probability of the field lying inside at all cells
/// is `1 − α`, estimated from joint draws. Bisection on `log ρ` keeps the
/// largest `ρ` whose estimated coverage is at least `1 − α`.
pub fn simultaneous_band(samples: &Samples, marginals: &FieldMarginals, alpha: f64, u: f64, tol: f64) -> Result<BandResult> {
    check_alpha(alpha)?;
    let n = samples.n_samples();
    if n < MIN_SAMPLES || 1.0 / (n as f64) > tol {
        return Err(Error::InsufficientSamples(format!(
            "{n} draws cannot resolve coverage to {tol}; need at least {}",
            MIN_SAMPLES.max((1.0 / tol).ceil() as usize)
        )));
    }
    if samples.n_cells() != marginals.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: marginals.n_cells(),
            found: samples.n_cells(),
        });
    }
    let target = 1.0 - alpha;
    let coverage = |rho: f64| {
        let (l, h) = band_at(marginals, rho);
        let c = joint_coverage(samples, &l, &h);
        (c, l, h)
    };
    let finish = |rho: f64, (c, l, h): (f64, Vec<f64>, Vec<f64>)| {
        let mut band = BandResult::build(alpha, rho, l, h, BandMethod::Simultaneous, u);
        band.coverage_estimate = Some(c);
        band.coverage_se = Some((c * (1.0 - c) / n as f64).sqrt());
        band
    };

    let mut hi = alpha / 2.0;
    let at_hi = coverage(hi);
    if at_hi.0 >= target - tol {
        return Ok(finish(hi, at_hi));
    }
    let mut lo = alpha / (20.0 * marginals.n_cells() as f64);
    let mut at_lo = coverage(lo);
    let mut widenings = 0;
    while at_lo.0 < target {
        if widenings == MAX_WIDENINGS {
            return Err(Error::NoConvergence(format!(
                "joint coverage {} below {target} even at band level {lo:e}",
                at_lo.0
            )));
        }
        lo /= 10.0;
        at_lo = coverage(lo);
        widenings += 1;
    }
    while hi / lo - 1.0 > 1e-6 {
        if (at_lo.0 - target).abs() <= tol / 4.0 {
            break;
        }
        let mid = (lo * hi).sqrt();
        let at_mid = coverage(mid);
        if at_mid.0 >= target {
            lo = mid;
            at_lo = at_mid;
        } else {
            hi = mid;
        }
    }
    Ok(finish(lo, at_lo))
}

/// Indices of the cells whose band excludes `u`.
pub fn avoidance_set(band: &BandResult, u: f64) -> Vec<usize> {
    (0..band.n_cells())
        .filter(|&i| excludes(band.lower[i], band.upper[i], u))
        .collect()
}
