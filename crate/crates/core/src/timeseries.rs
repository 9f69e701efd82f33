//! Stationary AR(1) structure in time and separable space-time precisions.

use crate::error::{Error, Result};
use crate::sparse::SparseSymmetric;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Params {
    pub phi: f64,
    pub m: usize,
}

impl Ar1Params {
    pub fn new(phi: f64, m: usize) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(Error::PhiOutOfRange(phi));
        }
        if m == 0 {
            return Err(Error::InvalidParameters("AR(1) needs at least one time point".into()));
        }
        Ok(Self { phi, m })
    }
}

/// Precision of a stationary AR(1) process with unit innovation precision:
/// tridiagonal with diagonal `(1, 1+φ², …, 1+φ², 1)` and off-diagonal `−φ`.
/// The tridiagonal pattern is kept even when `φ = 0`.
pub fn ar1_precision(p: &Ar1Params) -> Result<SparseSymmetric> {
    let Ar1Params { phi, m } = Ar1Params::new(p.phi, p.m)?;
    if m == 1 {
        return SparseSymmetric::from_diagonal(&[1.0 - phi * phi]);
    }
    let mut t = Vec::with_capacity(2 * m - 1);
    for i in 0..m {
        let d = if i == 0 || i == m - 1 { 1.0 } else { 1.0 + phi * phi };
        t.push((i, i, d));
        if i + 1 < m {
            t.push((i + 1, i, -phi));
        }
    }
    SparseSymmetric::from_triplets(m, t)
}

/// `log |Q_AR|` in closed form: `log(1 − φ²)`.
pub fn ar1_log_det(p: &Ar1Params) -> Result<f64> {
    let p = Ar1Params::new(p.phi, p.m)?;
    Ok((1.0 - p.phi * p.phi).ln())
}

/// Covariance `φ^|i−j| / (1 − φ²)` of the stationary process.
pub fn ar1_covariance(phi: f64, i: usize, j: usize) -> f64 {
    phi.powi(i.abs_diff(j) as i32) / (1.0 - phi * phi)
}

/// Joint precision `Q_time ⊗ Q_space` of a separable process, laid out
/// time-major (block `(s, t)` is `Q_time[s, t] · Q_space`).
pub fn kron_precision(q_time: &SparseSymmetric, q_space: &SparseSymmetric) -> SparseSymmetric {
    SparseSymmetric::kron(q_time, q_space)
}
