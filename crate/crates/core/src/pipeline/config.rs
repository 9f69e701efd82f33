use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excursions::DEFAULT_TOL;
use crate::inference::{OptimOptions, HESSIAN_STEP};
use crate::mesh::MeshParams;
use crate::model::{HyperPrior, NaturalParams, N_HYPER};

/// Run configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub bands: BandsConfig,
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// `lon,lat,date,value` input of `prepare`.
    pub daily: Option<PathBuf>,
    /// `lon,lat,year,anomaly` input of `fit` and `bands`.
    pub anomalies: Option<PathBuf>,
    /// `lon,lat,mean,sd` standardization constants.
    pub constants: Option<PathBuf>,
    /// Block size for upscaling in `prepare`; 1 keeps the input grid.
    #[serde(default = "one")]
    pub upscale: usize,
}

fn one() -> usize {
    1
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            daily: None,
            anomalies: None,
            constants: None,
            upscale: 1,
        }
    }
}

/// Mesh settings in multiples of the grid spacing; absent values use the
/// defaults of [`MeshConfig::params`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub extension: Option<f64>,
    pub max_edge_inner: Option<f64>,
    pub max_edge_outer: Option<f64>,
    pub cutoff: Option<f64>,
}

impl MeshConfig {
    /// Absolute mesh parameters for data with grid step `spacing` and
    /// domain diameter `diameter`.
    pub fn params(&self, spacing: f64, diameter: f64) -> MeshParams {
        MeshParams {
            extension: self.extension.map_or(0.3 * diameter, |v| v * spacing),
            max_edge_inner: self.max_edge_inner.unwrap_or(1.5) * spacing,
            max_edge_outer: self.max_edge_outer.unwrap_or(4.0) * spacing,
            cutoff: self.cutoff.unwrap_or(0.5) * spacing,
        }
    }
}

/// Optional overrides of the default hyperparameter prior.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: Option<[f64; N_HYPER]>,
    pub sd: Option<[f64; N_HYPER]>,
}

impl PriorConfig {
    pub fn prior(&self, diameter: f64) -> Result<HyperPrior> {
        let mut p = HyperPrior::for_domain(diameter)?;
        if let Some(m) = self.mean {
            p.mean = m;
        }
        if let Some(s) = self.sd {
            p.sd = s;
        }
        p.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub tol: f64,
    pub max_evals: usize,
    pub hessian_step: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        let o = OptimOptions::default();
        Self {
            tol: o.tol,
            max_evals: o.max_evals,
            hessian_step: HESSIAN_STEP,
        }
    }
}

impl InferenceConfig {
    pub fn optim(&self) -> OptimOptions {
        OptimOptions {
            tol: self.tol,
            max_evals: self.max_evals,
            ..OptimOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandsConfig {
    pub alpha: Vec<f64>,
    pub samples: usize,
    pub tol: f64,
    /// Level the avoidance sets test against.
    pub level: f64,
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self {
            alpha: vec![0.05, 0.01],
            samples: 50_000,
            tol: DEFAULT_TOL,
            level: 0.0,
        }
    }
}

/// Synthetic data on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "unit")]
    pub spacing: f64,
    #[serde(default)]
    pub origin: [f64; 2],
    pub first_year: i32,
    pub last_year: i32,
    /// Fixed global trend; drawn from its prior when absent.
    pub beta0: Option<f64>,
    pub theta: NaturalParams,
}

fn unit() -> f64 {
    1.0
}

impl SimulateConfig {
    /// Cell centres, row by row.
    pub fn cells(&self) -> Vec<[f64; 2]> {
        (0..self.ny)
            .flat_map(|j| {
                (0..self.nx).map(move |i| {
                    [
                        self.origin[0] + i as f64 * self.spacing,
                        self.origin[1] + j as f64 * self.spacing,
                    ]
                })
            })
            .collect()
    }

    pub fn years(&self) -> Vec<i32> {
        (self.first_year..=self.last_year).collect()
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.bands.alpha.is_empty() || self.bands.alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad(format!("bands.alpha must be levels in (0, 1), got {:?}", self.bands.alpha));
        }
        if !(self.bands.tol > 0.0) {
            return bad("bands.tol must be positive".into());
        }
        if self.data.upscale == 0 {
            return bad("data.upscale must be at least 1".into());
        }
        if !(self.inference.tol > 0.0) || self.inference.max_evals == 0 {
            return bad("inference.tol and inference.max_evals must be positive".into());
        }
        if !(self.inference.hessian_step >= 0.0) {
            return bad("inference.hessian_step must be non-negative".into());
        }
        for (name, v) in [
            ("mesh.extension", self.mesh.extension),
            ("mesh.max_edge_inner", self.mesh.max_edge_inner),
            ("mesh.max_edge_outer", self.mesh.max_edge_outer),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return bad(format!("{name} must be positive"));
                }
            }
        }
        if let Some(s) = &self.simulate {
            if s.nx * s.ny < 3 || s.last_year < s.first_year || !(s.spacing > 0.0) {
                return bad("simulate needs at least 3 cells, one year and positive spacing".into());
            }
        }
        Ok(())
    }

    /// Resolves a configured path against the configuration directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// The configured path for `key`, resolved, or a configuration error.
    pub fn input(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        path.as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::ConfigInvalid(format!("data.{key} is not set")))
    }
}
