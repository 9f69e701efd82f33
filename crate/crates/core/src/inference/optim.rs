use rayon::prelude::*;

/// Settings for [`maximize`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimOptions {
    /// Convergence tolerance on the spread of objective values.
    pub tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    pub max_evals: usize,
    /// Simplex restarts from the current best point.
    pub restarts: usize,
    /// Smallest coordinate step of the final pattern search.
    pub probe_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            initial_step: 0.5,
            max_evals: 4000,
            restarts: 4,
            probe_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
}

/// Maximizes `f` by Nelder–Mead with restarts, followed by a coordinate
/// pattern search so that no coordinate neighbour at `probe_step` is
/// better. Non-finite values count as `−∞`.
pub fn maximize<F>(f: F, init: &[f64], opts: &OptimOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut evals = 0usize;
    let mut best = init.to_vec();
    let mut best_value = eval(&best);
    evals += 1;
    let mut converged = false;
    let mut step = opts.initial_step;
    for _ in 0..=opts.restarts {
        let (x, v, n, ok) = nelder_mead(&eval, &best, step, opts.tol, opts.max_evals.saturating_sub(evals));
        evals += n;
        let improvement = v - best_value;
        if v > best_value {
            best = x;
            best_value = v;
        }
        converged = ok;
        if !ok || improvement <= opts.tol {
            break;
        }
        step = (step * 0.5).max(10.0 * opts.probe_step);
    }

    // Pattern search, evaluating all coordinate neighbours in parallel.
    let d = best.len();
    let mut h = (opts.initial_step * 0.1).max(opts.probe_step);
    while evals < opts.max_evals {
        let candidates: Vec<Vec<f64>> = (0..2 * d)
            .map(|k| {
                let mut x = best.clone();
                x[k / 2] += if k % 2 == 0 { h } else { -h };
                x
            })
            .collect();
        let values: Vec<f64> = candidates.par_iter().map(|x| eval(x)).collect();
        evals += 2 * d;
        let (k, v) = values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        if v > best_value {
            best = candidates[k].clone();
            best_value = v;
        } else if h > opts.probe_step {
            h = (h * 0.2).max(opts.probe_step);
        } else {
            return OptimResult {
                x: best,
                value: best_value,
                evaluations: evals,
                converged,
            };
        }
    }
    OptimResult {
        x: best,
        value: best_value,
        evaluations: evals,
        converged: false,
    }
}

/// One Nelder–Mead run; returns the best vertex, its value, evaluations
/// used and whether the tolerance was met.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, tol: f64, budget: usize) -> (Vec<f64>, f64, usize, bool) {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;
    let d = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let mut evals = 0;
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, v));
    }
    evals += d + 1;
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { c.iter().zip(w).map(|(a, b)| a + t * (b - a)).collect() };
    loop {
        // Best first.
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let spread = simplex[0].1 - simplex[d].1;
        if spread.is_finite() && spread <= tol {
            let (x, v) = simplex.swap_remove(0);
            return (x, v, evals, true);
        }
        if evals + 2 > budget {
            let (x, v) = simplex.swap_remove(0);
            return (x, v, evals, false);
        }
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let xr = point(&centroid, &worst.0, -REFLECT);
        let vr = f(&xr);
        evals += 1;
        if vr > simplex[0].1 {
            let xe = point(&centroid, &worst.0, -EXPAND);
            let ve = f(&xe);
            evals += 1;
            simplex[d] = if ve > vr { (xe, ve) } else { (xr, vr) };
        } else if vr > simplex[d - 1].1 {
            simplex[d] = (xr, vr);
        } else {
            let (xc, vc) = if vr > worst.1 {
                let xc = point(&centroid, &xr, CONTRACT);
                let vc = f(&xc);
                (xc, vc)
            } else {
                let xc = point(&centroid, &worst.0, CONTRACT);
                let vc = f(&xc);
                (xc, vc)
            };
            evals += 1;
            if vc > worst.1.max(vr) {
                simplex[d] = (xc, vc);
            } else {
                let x_best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let xs = point(&x_best, &item.0, SHRINK);
                    let vs = f(&xs);
                    *item = (xs, vs);
                }
                evals += d;
            }
        }
    }
}
