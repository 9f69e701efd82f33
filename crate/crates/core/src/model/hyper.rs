use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spde::{kappa_from, range_from, sigma2_from, tau_from};

/// Number of hyperparameters.
pub const N_HYPER: usize = 6;

pub const HYPER_NAMES: [&str; N_HYPER] = [
    "log_prec_eps",
    "phi_internal",
    "log_kappa_beta",
    "log_tau_beta",
    "log_kappa_xi",
    "log_tau_xi",
];

/// Hyperparameters on the unconstrained internal scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub log_prec_eps: f64,
    /// `logit((φ + 1) / 2)`.
    pub phi_internal: f64,
    pub log_kappa_beta: f64,
    pub log_tau_beta: f64,
    pub log_kappa_xi: f64,
    pub log_tau_xi: f64,
}

/// The same hyperparameters on their natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    pub noise_variance: f64,
    pub phi: f64,
    pub range_beta: f64,
    pub sigma2_beta: f64,
    pub range_xi: f64,
    pub sigma2_xi: f64,
}

pub fn phi_from_internal(x: f64) -> f64 {
    // 2 / (1 + e^{-x}) − 1, written to stay accurate near zero.
    (x / 2.0).tanh()
}

pub fn phi_to_internal(phi: f64) -> f64 {
    2.0 * phi.atanh()
}

impl HyperParams {
    pub fn from_array(a: [f64; N_HYPER]) -> Self {
        Self {
            log_prec_eps: a[0],
            phi_internal: a[1],
            log_kappa_beta: a[2],
            log_tau_beta: a[3],
            log_kappa_xi: a[4],
            log_tau_xi: a[5],
        }
    }

    pub fn from_slice(a: &[f64]) -> Result<Self> {
        let arr: [f64; N_HYPER] = a.try_into().map_err(|_| Error::DimensionMismatch {
            expected: N_HYPER,
            found: a.len(),
        })?;
        Ok(Self::from_array(arr))
    }

    pub fn to_array(&self) -> [f64; N_HYPER] {
        [
            self.log_prec_eps,
            self.phi_internal,
            self.log_kappa_beta,
            self.log_tau_beta,
            self.log_kappa_xi,
            self.log_tau_xi,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn prec_eps(&self) -> f64 {
        self.log_prec_eps.exp()
    }

    pub fn phi(&self) -> f64 {
        phi_from_internal(self.phi_internal)
    }

    pub fn kappa_beta(&self) -> f64 {
        self.log_kappa_beta.exp()
    }

    pub fn tau_beta(&self) -> f64 {
        self.log_tau_beta.exp()
    }

    pub fn kappa_xi(&self) -> f64 {
        self.log_kappa_xi.exp()
    }

    pub fn tau_xi(&self) -> f64 {
        self.log_tau_xi.exp()
    }

    pub fn from_natural(n: &NaturalParams) -> Result<Self> {
        if !(n.noise_variance > 0.0) {
            return Err(Error::NonPositiveParameter {
                name: "noise_variance",
                value: n.noise_variance,
            });
        }
        if !(n.phi.abs() < 1.0) {
            return Err(Error::PhiOutOfRange(n.phi));
        }
        let kb = kappa_from(n.range_beta)?;
        let kx = kappa_from(n.range_xi)?;
        Ok(Self {
            log_prec_eps: -n.noise_variance.ln(),
            phi_internal: phi_to_internal(n.phi),
            log_kappa_beta: kb.ln(),
            log_tau_beta: tau_from(kb, n.sigma2_beta)?.ln(),
            log_kappa_xi: kx.ln(),
            log_tau_xi: tau_from(kx, n.sigma2_xi)?.ln(),
        })
    }

    pub fn to_natural(&self) -> NaturalParams {
        // Exponentials of finite values are positive, so the couplings
        // cannot fail; fall back to NaN if the values are not finite.
        let s2 = |k: f64, t: f64| sigma2_from(k, t).unwrap_or(f64::NAN);
        let r = |k: f64| range_from(k).unwrap_or(f64::NAN);
        NaturalParams {
            noise_variance: (-self.log_prec_eps).exp(),
            phi: self.phi(),
            range_beta: r(self.kappa_beta()),
            sigma2_beta: s2(self.kappa_beta(), self.tau_beta()),
            range_xi: r(self.kappa_xi()),
            sigma2_xi: s2(self.kappa_xi(), self.tau_xi()),
        }
    }
}

/// Independent Gaussian priors on the internal scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub mean: [f64; N_HYPER],
    pub sd: [f64; N_HYPER],
}

/// Default prior standard deviations, in the order of [`HYPER_NAMES`].
pub const DEFAULT_PRIOR_SD: [f64; N_HYPER] = [2.0, 1.5, 1.0, 1.5, 1.0, 1.5];

impl HyperPrior {
    /// Weakly informative default scaled to the study region: prior median
    /// range a quarter of the domain diameter and prior median marginal
    /// variance one for both fields.
    pub fn for_domain(diameter: f64) -> Result<Self> {
        let rho0 = diameter / 4.0;
        let mu_kappa = kappa_from(rho0)?.ln();
        let mu_tau = -0.5 * (4.0 * std::f64::consts::PI).ln() - mu_kappa;
        Ok(Self {
            mean: [0.0, 0.0, mu_kappa, mu_tau, mu_kappa, mu_tau],
            sd: DEFAULT_PRIOR_SD,
        })
    }

    pub fn log_density(&self, theta: &HyperParams) -> f64 {
        theta
            .to_array()
            .iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(x, (m, s))| {
                let z = (x - m) / s;
                -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sd.iter().any(|s| !(*s > 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameters("prior needs finite means and positive sds".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_transform_round_trip() {
        assert_eq!(phi_from_internal(0.0), 0.0);
        for phi in [-0.99, -0.3, 0.0, 0.4, 0.95] {
            assert!((phi_from_internal(phi_to_internal(phi)) - phi).abs() < 1e-14);
        }
        // Matches the inverse logit form.
        let x: f64 = 0.7;
        let il = 1.0 / (1.0 + (-x).exp());
        assert!((phi_from_internal(x) - (2.0 * il - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn natural_round_trip() {
        let n = NaturalParams {
            noise_variance: 0.09,
            phi: 0.4,
            range_beta: 5.0,
            sigma2_beta: 0.05,
            range_xi: 15.0,
            sigma2_xi: 1.0,
        };
        let back = HyperParams::from_natural(&n).unwrap().to_natural();
        for (a, b) in [
            (back.noise_variance, n.noise_variance),
            (back.phi, n.phi),
            (back.range_beta, n.range_beta),
            (back.sigma2_beta, n.sigma2_beta),
            (back.range_xi, n.range_xi),
            (back.sigma2_xi, n.sigma2_xi),
        ] {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn domain_prior_has_unit_median_variance() {
        let p = HyperPrior::for_domain(20.0).unwrap();
        let theta = HyperParams::from_array(p.mean);
        let n = theta.to_natural();
        assert!((n.sigma2_beta - 1.0).abs() < 1e-12);
        assert!((n.range_xi - 5.0).abs() < 1e-12);
    }
}
