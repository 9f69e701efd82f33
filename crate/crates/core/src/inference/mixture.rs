use statrs::distribution::{ContinuousCDF, Normal};

/// Tolerance in probability for mixture quantiles.
pub const QUANTILE_TOL: f64 = 1e-8;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Finite mixture of univariate Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture1 {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Mixture1 {
    /// Weights are assumed normalized; components with zero sd are point
    /// masses.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Self {
        debug_assert!(weights.len() == means.len() && means.len() == sds.len());
        Self { weights, means, sds }
    }

    pub fn gaussian(mean: f64, sd: f64) -> Self {
        Self::new(vec![1.0], vec![mean], vec![sd])
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    /// Law of total variance.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self
            .weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * (s * s + m * m))
            .sum();
        (second - mean * mean).max(0.0)
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| {
                let c = if *s > 0.0 {
                    normal_cdf((x - m) / s)
                } else if x >= *m {
                    1.0
                } else {
                    0.0
                };
                w * c
            })
            .sum()
    }

    /// Quantile by bisection on the mixture CDF over `mean ± 10 sd`,
    /// widened to cover every component; exact for a single component.
    pub fn quantile(&self, p: f64) -> f64 {
        if self.weights.len() == 1 {
            return if self.sds[0] > 0.0 {
                self.means[0] + self.sds[0] * normal_quantile(p)
            } else {
                self.means[0]
            };
        }
        let (mean, sd) = (self.mean(), self.sd());
        if sd == 0.0 {
            return mean;
        }
        let mut lo = mean - 10.0 * sd;
        let mut hi = mean + 10.0 * sd;
        for (m, s) in self.means.iter().zip(&self.sds) {
            lo = lo.min(m - 10.0 * s);
            hi = hi.max(m + 10.0 * s);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f = self.cdf(mid);
            if (f - p).abs() <= QUANTILE_TOL * 1e-2 || mid == lo || mid == hi {
                return mid;
            }
            if f < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `E[f(X)]` by composite Simpson quadrature of each component over
    /// `±10` sds.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        const HALF_WIDTH: f64 = 10.0;
        const INTERVALS: usize = 800;
        let h = 2.0 * HALF_WIDTH / INTERVALS as f64;
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| {
                if *s == 0.0 {
                    return w * f(*m);
                }
                let mut acc = 0.0;
                for i in 0..=INTERVALS {
                    let z = -HALF_WIDTH + i as f64 * h;
                    let c = if i == 0 || i == INTERVALS {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    acc += c * f(m + s * z) * phi(z);
                }
                w * acc * h / 3.0
            })
            .sum()
    }
}
