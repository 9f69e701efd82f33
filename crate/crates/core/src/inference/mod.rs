//! Hyperparameter mode, grid exploration, mixture marginals of the trend
//! field and joint posterior sampling.

mod grid;
mod mixture;
mod optim;

pub use grid::{design_points, explore_grid, hessian, ThetaGrid, GRID_RADIUS, HESSIAN_STEP, MAX_SD, WEIGHT_PRUNE};
pub use mixture::{normal_cdf, normal_quantile, Mixture1, QUANTILE_TOL};
pub use optim::{maximize, OptimOptions, OptimResult};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HyperParams, Model, TrendPosterior, N_HYPER};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeResult {
    pub theta: HyperParams,
    pub log_posterior: f64,
    pub evaluations: usize,
    /// False if the evaluation budget was exhausted.
    pub converged: bool,
}

/// Maximizes `f` over the internal hyperparameter scale.
pub fn find_mode_with<F>(f: &F, init: &HyperParams, opts: &OptimOptions) -> Result<ModeResult>
where
    F: Fn(&[f64; N_HYPER]) -> f64 + Sync,
{
    if !init.is_finite() {
        return Err(Error::InvalidParameters("initial hyperparameters must be finite".into()));
    }
    let g = |x: &[f64]| f(&x.try_into().expect("hyperparameter dimension"));
    let r = maximize(g, &init.to_array(), opts);
    if !r.value.is_finite() {
        return Err(Error::NoConvergence("log posterior is -inf everywhere visited".into()));
    }
    Ok(ModeResult {
        theta: HyperParams::from_slice(&r.x)?,
        log_posterior: r.value,
        evaluations: r.evaluations,
        converged: r.converged,
    })
}

/// Posterior mode of θ for a model.
pub fn find_mode(model: &Model, init: &HyperParams, opts: &OptimOptions) -> Result<ModeResult> {
    find_mode_with(&objective(model), init, opts)
}

/// `log π(θ | y)` as a function of the internal parameter array.
pub fn objective(model: &Model) -> impl Fn(&[f64; N_HYPER]) -> f64 + Sync + '_ {
    move |x| model.log_posterior(&HyperParams::from_array(*x))
}

/// Exploration grid around `mode` for a model.
pub fn explore_model_grid(model: &Model, mode: &HyperParams, hessian_step: f64) -> ThetaGrid {
    explore_grid(&objective(model), mode, hessian_step)
}

/// Draws stored row-major, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    n_samples: usize,
    n_cells: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(n_samples: usize, n_cells: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_samples * n_cells {
            return Err(Error::DimensionMismatch {
                expected: n_samples * n_cells,
                found: data.len(),
            });
        }
        Ok(Self { n_samples, n_cells, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cells = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cells);
        for r in rows {
            if r.len() != n_cells {
                return Err(Error::DimensionMismatch {
                    expected: n_cells,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n_samples: rows.len(),
            n_cells,
            data,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cells..(i + 1) * self.n_cells]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cells.max(1)).take(self.n_samples)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Maps each draw through a projector (vertices to locations).
    pub fn project(&self, projector: &SparseMatrix) -> Result<Self> {
        if projector.cols() != self.n_cells {
            return Err(Error::DimensionMismatch {
                expected: self.n_cells,
                found: projector.cols(),
            });
        }
        let rows: Vec<Vec<f64>> = self
            .rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|r| projector.matvec(r))
            .collect::<Result<_>>()?;
        Self::from_rows(&rows)
    }
}

/// Posterior marginals of the trend field as Gaussian mixtures over the
/// θ grid, one per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMarginals {
    cells: Vec<Mixture1>,
}

impl FieldMarginals {
    /// `means[k][i]` and `sds[k][i]` are component `k` at cell `i`.
    pub fn new(weights: &[f64], means: &[Vec<f64>], sds: &[Vec<f64>]) -> Result<Self> {
        if weights.is_empty() || means.len() != weights.len() || sds.len() != weights.len() {
            return Err(Error::InvalidParameters("mixture needs one mean and sd vector per weight".into()));
        }
        let n = means[0].len();
        if means.iter().chain(sds).any(|v| v.len() != n) {
            return Err(Error::InvalidParameters("component vectors differ in length".into()));
        }
        let cells = (0..n)
            .map(|i| {
                Mixture1::new(
                    weights.to_vec(),
                    means.iter().map(|m| m[i]).collect(),
                    sds.iter().map(|s| s[i]).collect(),
                )
            })
            .collect();
        Ok(Self { cells })
    }

    pub fn gaussian(means: &[f64], sds: &[f64]) -> Result<Self> {
        Self::new(&[1.0], &[means.to_vec()], &[sds.to_vec()])
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, i: usize) -> &Mixture1 {
        &self.cells[i]
    }

    pub fn means(&self) -> Vec<f64> {
        self.cells.iter().map(Mixture1::mean).collect()
    }

    pub fn sds(&self) -> Vec<f64> {
        self.cells.iter().map(Mixture1::sd).collect()
    }

    /// The `p` quantile at every cell.
    pub fn quantiles(&self, p: f64) -> Vec<f64> {
        self.cells.par_iter().map(|c| c.quantile(p)).collect()
    }
}

/// Conditional trend posteriors at every grid point with their weights.
#[derive(Debug, Clone)]
pub struct TrendMixture {
    pub weights: Vec<f64>,
    pub components: Vec<TrendPosterior>,
}

impl TrendMixture {
    pub fn new(grid: &ThetaGrid, model: &Model) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidParameters("empty θ grid".into()));
        }
        let components = grid
            .points
            .par_iter()
            .map(|t| model.trend_posterior(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights: grid.weights(),
            components,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.components[0].n_vertices()
    }

    /// Marginals at the mesh vertices, or at the rows of `projector`.
    pub fn marginals(&self, projector: Option<&SparseMatrix>) -> Result<FieldMarginals> {
        let parts: Vec<(Vec<f64>, Vec<f64>)> = self
            .components
            .par_iter()
            .map(|c| match projector {
                None => Ok((c.vertex_means(), c.vertex_variances().iter().map(|v| v.sqrt()).collect())),
                Some(p) => project_component(c, p),
            })
            .collect::<Result<_>>()?;
        let (means, sds): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        FieldMarginals::new(&self.weights, &means, &sds)
    }

    /// `n` joint draws of the trend field at the vertices: a grid point is
    /// drawn by weight, then the field from its Gaussian conditional.
    /// Batches use independent streams derived from `seed`, so the result
    /// does not depend on the thread count.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Samples> {
        const BATCH: usize = 1000;
        if n == 0 {
            return Err(Error::InvalidParameters("need at least one sample".into()));
        }
        let g = self.n_vertices();
        let k = g + 1;
        let cumulative: Vec<f64> = self
            .weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let total = *cumulative.last().expect("non-empty");
        let n_batches = n.div_ceil(BATCH);
        let batches: Vec<Vec<f64>> = (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b as u64);
                let rows = BATCH.min(n - b * BATCH);
                let mut out = vec![0.0; rows * g];
                let mut z = vec![0.0; k];
                for r in 0..rows {
                    let u: f64 = rng.random::<f64>() * total;
                    let c = cumulative.partition_point(|&c| c <= u).min(self.components.len() - 1);
                    self.components[c].sample_vertices_into(&mut rng, &mut z, &mut out[r * g..(r + 1) * g]);
                }
                out
            })
            .collect();
        Samples::new(n, g, batches.concat())
    }
}

fn project_component(c: &TrendPosterior, p: &SparseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = c.n_vertices();
    if p.cols() != g {
        return Err(Error::DimensionMismatch {
            expected: g,
            found: p.cols(),
        });
    }
    let mean = p.matvec(&c.vertex_means())?;
    let cov = c.covariance();
    // Covariance of the vertex values β₀ + β̃_g.
    let vcov = DMatrix::from_fn(g, g, |a, b| cov[(0, 0)] + cov[(0, b + 1)] + cov[(a + 1, 0)] + cov[(a + 1, b + 1)]);
    let sds = (0..p.rows())
        .map(|i| {
            let (idx, w) = p.row(i);
            let mut v = 0.0;
            for (a, wa) in idx.iter().zip(w) {
                for (b, wb) in idx.iter().zip(w) {
                    v += wa * wb * vcov[(*a, *b)];
                }
            }
            v.max(0.0).sqrt()
        })
        .collect();
    Ok((mean, sds))
}

/// Weighted summary of one scalar quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub q975: f64,
}

/// Natural-scale hyperparameter summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperSummaries {
    pub noise_variance: Summary,
    pub phi: Summary,
    pub range_beta: Summary,
    pub sigma2_beta: Summary,
    pub range_xi: Summary,
    pub sigma2_xi: Summary,
}

/// Summaries of the natural-scale hyperparameters under the grid
/// posterior smoothed by [`ThetaGrid::kernel_covariance`]. Each natural
/// quantity is a monotone map of a linear combination of θ, so its
/// distribution is a transformed one-dimensional Gaussian mixture.
pub fn hyper_posteriors(grid: &ThetaGrid) -> Result<HyperSummaries> {
    if grid.is_empty() {
        return Err(Error::InvalidParameters("empty θ grid".into()));
    }
    let w = grid.weights();
    let kernel = grid.kernel_covariance();
    let ln_sqrt8 = 8f64.sqrt().ln();
    let ln_4pi = (4.0 * std::f64::consts::PI).ln();
    let summarize = |a: [f64; N_HYPER], offset: f64, map: &dyn Fn(f64) -> f64| {
        let av = nalgebra::DVector::from_column_slice(&a);
        let sd = (av.transpose() * &kernel * &av)[(0, 0)].max(0.0).sqrt();
        let means: Vec<f64> = grid
            .points
            .iter()
            .map(|p| offset + p.to_array().iter().zip(&a).map(|(x, c)| x * c).sum::<f64>())
            .collect();
        let mix = Mixture1::new(w.clone(), means, vec![sd; w.len()]);
        let q = |p: f64| map(mix.quantile(p));
        let mean = mix.expect(map);
        let second = mix.expect(|x| map(x).powi(2));
        Summary {
            mean,
            sd: (second - mean * mean).max(0.0).sqrt(),
            q025: q(0.025),
            q05: q(0.05),
            q50: q(0.5),
            q95: q(0.95),
            q975: q(0.975),
        }
    };
    let e = |i: usize, c: f64| {
        let mut a = [0.0; N_HYPER];
        a[i] = c;
        a
    };
    let sigma2 = |ik: usize, it: usize| {
        let mut a = [0.0; N_HYPER];
        a[ik] = -2.0;
        a[it] = -2.0;
        a
    };
    Ok(HyperSummaries {
        noise_variance: summarize(e(0, -1.0), 0.0, &f64::exp),
        phi: summarize(e(1, 1.0), 0.0, &crate::model::phi_from_internal),
        range_beta: summarize(e(2, -1.0), ln_sqrt8, &f64::exp),
        sigma2_beta: summarize(sigma2(2, 3), -ln_4pi, &f64::exp),
        range_xi: summarize(e(4, -1.0), ln_sqrt8, &f64::exp),
        sigma2_xi: summarize(sigma2(4, 5), -ln_4pi, &f64::exp),
    })
}
