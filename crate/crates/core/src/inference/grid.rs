use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::model::{HyperParams, N_HYPER};

/// Finite-difference step on the internal scale.
pub const HESSIAN_STEP: f64 = 0.05;
/// Radius of the exploration design in standardized units.
pub const GRID_RADIUS: f64 = 2.0;
/// Relative weight below which grid points are dropped.
pub const WEIGHT_PRUNE: f64 = 1e-6;
/// Largest posterior standard deviation allowed along any direction.
pub const MAX_SD: f64 = 5.0;

/// Discrete approximation of `π(θ | y)` around its mode.
#[derive(Debug, Clone)]
pub struct ThetaGrid {
    pub points: Vec<HyperParams>,
    pub log_posterior: Vec<f64>,
    /// Normalized so that the weights sum to one.
    pub log_weights: Vec<f64>,
    pub mode_index: usize,
    /// Map from standardized coordinates to θ offsets, `θ = mode + L z`;
    /// absent for a one-point grid.
    pub transform: Option<DMatrix<f64>>,
    /// Standardized coordinates of each point.
    pub z: Vec<[f64; N_HYPER]>,
}

impl ThetaGrid {
    pub fn single(theta: HyperParams, log_posterior: f64) -> Self {
        Self {
            points: vec![theta],
            log_posterior: vec![log_posterior],
            log_weights: vec![0.0],
            mode_index: 0,
            transform: None,
            z: vec![[0.0; N_HYPER]],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn mode(&self) -> &HyperParams {
        &self.points[self.mode_index]
    }

    /// Kernel covariance on θ used to smooth the discrete grid into a
    /// continuous density: in standardized coordinates it is `I` minus
    /// the weighted second moment of the design, so that for an exactly
    /// Gaussian posterior the smoothed mixture has unit covariance.
    pub fn kernel_covariance(&self) -> DMatrix<f64> {
        let Some(l) = &self.transform else {
            return DMatrix::zeros(N_HYPER, N_HYPER);
        };
        let w = self.weights();
        let mut mean = DVector::zeros(N_HYPER);
        for (wk, z) in w.iter().zip(&self.z) {
            mean += DVector::from_column_slice(z) * *wk;
        }
        let mut second = DMatrix::zeros(N_HYPER, N_HYPER);
        for (wk, z) in w.iter().zip(&self.z) {
            let d = DVector::from_column_slice(z) - &mean;
            second += &d * d.transpose() * *wk;
        }
        let k = DMatrix::identity(N_HYPER, N_HYPER) - second;
        let eig = k.symmetric_eigen();
        let floor = 0.1;
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        let k = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        l * k * l.transpose()
    }
}

/// Central finite-difference Hessian of `f` at `x`.
pub fn hessian<F>(f: &F, x: &[f64; N_HYPER], step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64; N_HYPER]) -> f64 + Sync,
{
    let d = N_HYPER;
    let shifted = |pairs: &[(usize, f64)]| {
        let mut y = *x;
        for &(i, s) in pairs {
            y[i] += s * step;
        }
        y
    };
    let mut jobs: Vec<(usize, usize, [f64; N_HYPER], f64)> = Vec::new();
    for i in 0..d {
        jobs.push((i, i, shifted(&[(i, 1.0)]), 1.0));
        jobs.push((i, i, shifted(&[(i, -1.0)]), 1.0));
        for j in 0..i {
            jobs.push((i, j, shifted(&[(i, 1.0), (j, 1.0)]), 1.0));
            jobs.push((i, j, shifted(&[(i, 1.0), (j, -1.0)]), -1.0));
            jobs.push((i, j, shifted(&[(i, -1.0), (j, 1.0)]), -1.0));
            jobs.push((i, j, shifted(&[(i, -1.0), (j, -1.0)]), 1.0));
        }
    }
    let values: Vec<f64> = jobs.par_iter().map(|j| f(&j.2)).collect();
    let f0 = f(x);
    let mut h = DMatrix::zeros(d, d);
    for (job, v) in jobs.iter().zip(&values) {
        let (i, j, _, sign) = *job;
        if i == j {
            h[(i, i)] += v / (step * step);
        } else {
            h[(i, j)] += sign * v / (4.0 * step * step);
        }
    }
    for i in 0..d {
        h[(i, i)] -= 2.0 * f0 / (step * step);
        for j in 0..i {
            h[(j, i)] = h[(i, j)];
        }
    }
    h
}

/// Sign patterns for the corner points: rows 1..=d, columns 1..=d of the
/// order-8 Sylvester–Hadamard matrix.
fn corner_patterns() -> Vec<[f64; N_HYPER]> {
    (1..=N_HYPER)
        .map(|r| std::array::from_fn(|c| if ((r & (c + 1)).count_ones() % 2) == 0 { 1.0 } else { -1.0 }))
        .collect()
}

/// Standardized design: the centre, `±radius` on every axis, and `2d`
/// corners at the same radius.
pub fn design_points(radius: f64) -> Vec<[f64; N_HYPER]> {
    let mut z = vec![[0.0; N_HYPER]];
    for i in 0..N_HYPER {
        for s in [1.0, -1.0] {
            let mut p = [0.0; N_HYPER];
            p[i] = s * radius;
            z.push(p);
        }
    }
    let scale = radius / (N_HYPER as f64).sqrt();
    for c in corner_patterns() {
        for s in [1.0, -1.0] {
            z.push(c.map(|v| s * scale * v));
        }
    }
    z
}

/// Builds the exploration grid around `mode` for the objective `f`.
/// A non-positive `hessian_step` or a non-finite curvature gives the
/// one-point grid.
pub fn explore_grid<F>(f: &F, mode: &HyperParams, hessian_step: f64) -> ThetaGrid
where
    F: Fn(&[f64; N_HYPER]) -> f64 + Sync,
{
    let x = mode.to_array();
    let f0 = f(&x);
    if !(hessian_step > 0.0) {
        return ThetaGrid::single(*mode, f0);
    }
    let h = hessian(f, &x, hessian_step);
    if h.iter().any(|v| !v.is_finite()) {
        return ThetaGrid::single(*mode, f0);
    }
    let eig = (-h).symmetric_eigen();
    let min_prec = 1.0 / (MAX_SD * MAX_SD);
    let inv_sqrt = eig.eigenvalues.map(|v| 1.0 / v.max(min_prec).sqrt());
    let l = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt);

    let z = design_points(GRID_RADIUS);
    let points: Vec<[f64; N_HYPER]> = z
        .iter()
        .map(|zk| {
            let off = &l * DVector::from_column_slice(zk);
            std::array::from_fn(|i| x[i] + off[i])
        })
        .collect();
    let mut lp: Vec<f64> = points[1..].par_iter().map(f).collect();
    lp.insert(0, f0);
    from_evaluations(points, z, lp, Some(l))
}

fn from_evaluations(
    points: Vec<[f64; N_HYPER]>,
    z: Vec<[f64; N_HYPER]>,
    lp: Vec<f64>,
    transform: Option<DMatrix<f64>>,
) -> ThetaGrid {
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = |idx: &[usize]| max + idx.iter().map(|&k| (lp[k] - max).exp()).sum::<f64>().ln();
    let finite: Vec<usize> = (0..lp.len()).filter(|&k| lp[k].is_finite()).collect();
    let norm = lse(&finite);
    let kept: Vec<usize> = finite
        .into_iter()
        .filter(|&k| (lp[k] - norm).exp() >= WEIGHT_PRUNE)
        .collect();
    let norm = lse(&kept);
    let mode_index = kept
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (pos, &k)| if lp[k] > acc.1 { (pos, lp[k]) } else { acc })
        .0;
    ThetaGrid {
        points: kept.iter().map(|&k| HyperParams::from_array(points[k])).collect(),
        log_posterior: kept.iter().map(|&k| lp[k]).collect(),
        log_weights: kept.iter().map(|&k| lp[k] - norm).collect(),
        mode_index,
        transform,
        z: kept.iter().map(|&k| z[k]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_are_balanced() {
        let c = corner_patterns();
        for j in 0..N_HYPER {
            for k in 0..j {
                let dot: f64 = (0..N_HYPER).map(|i| c[i][j] * c[i][k]).sum();
                assert!(dot.abs() <= 2.0);
            }
        }
        assert!(c.iter().all(|r| r.iter().any(|&v| v < 0.0)));
    }

    #[test]
    fn hessian_of_quadratic_is_exact() {
        let a = DMatrix::from_fn(N_HYPER, N_HYPER, |i, j| if i == j { 2.0 + i as f64 } else { 0.3 });
        let f = |x: &[f64; N_HYPER]| {
            let v = DVector::from_column_slice(x);
            -0.5 * (v.transpose() * &a * &v)[(0, 0)]
        };
        let h = hessian(&f, &[0.1; N_HYPER], HESSIAN_STEP);
        assert!((h + &a).abs().max() < 1e-9);
    }
}
