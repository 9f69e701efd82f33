use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Config;
use super::data::{
    infer_spacing, seasonal_means, standardize, upscale, AnomalyPanel, CellKey, DailyGrid, Standardization,
};
use super::io::{
    anomaly_csv, avoid_csv, cells_csv, cells_geojson, constants_csv, fmt_f64, read_anomaly_csv, read_constants_csv,
    read_daily_csv, read_text, sha256_file, sha256_hex, to_json, CellRow, OutputSet,
};
use super::simulate::simulate_with;
use crate::error::{Error, Result};
use crate::excursions::{bonferroni_band, pointwise_band, simultaneous_band, BandMethod, BandResult};
use crate::inference::{explore_model_grid, find_mode, hyper_posteriors, HyperSummaries, ThetaGrid, TrendMixture};
use crate::mesh::{build_mesh, Mesh, Point};
use crate::model::{HyperParams, HyperPrior, Model, NaturalParams, N_HYPER};

pub const MANIFEST: &str = "manifest.json";
pub const ANOMALIES: &str = "anomalies.csv";
pub const CONSTANTS: &str = "constants.csv";
pub const MESH: &str = "mesh.txt";
pub const GRID: &str = "grid.json";
pub const HYPER: &str = "hyperparameters.json";
pub const BANDS: &str = "bands.json";
pub const TRUTH: &str = "truth.json";
pub const REPORT: &str = "report.txt";

/// Provenance of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Configuration as used, including any command-line overrides.
    pub config: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

fn record(command: &str, cfg: &Config, inputs: &[&Path]) -> Result<RunRecord> {
    let config = toml::to_string(cfg).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let mut hashed = BTreeMap::new();
    for p in inputs {
        hashed.insert(p.display().to_string(), sha256_file(p)?);
    }
    Ok(RunRecord {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config_sha256: sha256_hex(config.as_bytes()),
        config,
        inputs: hashed,
        outputs: BTreeMap::new(),
        warnings: Vec::new(),
    })
}

/// Writes the outputs, then merges the record into the run manifest.
fn finish(out: &Path, files: OutputSet, mut rec: RunRecord) -> Result<RunRecord> {
    rec.outputs = files.write(out)?;
    let path = out.join(MANIFEST);
    let mut manifest: BTreeMap<String, RunRecord> = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| Error::InputMalformed {
            path: path.clone(),
            message: e.to_string(),
        })?,
        Err(_) => BTreeMap::new(),
    };
    manifest.insert(rec.command.clone(), rec.clone());
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidParameters(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(rec)
}

/// Daily data to standardized seasonal anomalies, optionally upscaled.
pub fn run_prepare(cfg: &Config, out: &Path) -> Result<RunRecord> {
    let input = cfg.input(&cfg.data.daily, "daily")?;
    let mut rec = record("prepare", cfg, &[&input])?;
    let daily = DailyGrid::new(&read_daily_csv(&input)?)?;
    let mut anomalies = standardize(&seasonal_means(&daily)?)?;
    if cfg.data.upscale > 1 {
        anomalies = upscale(&anomalies, cfg.data.upscale)?;
    }
    rec.warnings = anomalies
        .dropped
        .iter()
        .map(|(p, why)| format!("dropped cell ({}, {}): {why}", p[0], p[1]))
        .collect();
    let mut files = OutputSet::default();
    files.add(ANOMALIES, anomaly_csv(&anomalies.panel));
    files.add(CONSTANTS, constants_csv(&anomalies));
    finish(out, files, rec)
}

fn domain(cells: &[Point]) -> Result<(f64, f64)> {
    let spacing = infer_spacing(cells)?;
    let mut diameter: f64 = 0.0;
    for a in cells {
        for b in cells {
            diameter = diameter.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
        }
    }
    Ok((spacing[0].min(spacing[1]), diameter))
}

/// Mesh and hyperparameter prior a fit of `cells` uses.
pub fn fit_mesh(cfg: &Config, cells: &[Point]) -> Result<(Mesh, HyperPrior)> {
    let (spacing, diameter) = domain(cells)?;
    let mesh = build_mesh(cells, &cfg.mesh.params(spacing, diameter))?;
    Ok((mesh, cfg.prior.prior(diameter)?))
}

/// Synthetic anomalies on the configured grid with the latent truth.
pub fn run_simulate(cfg: &Config, out: &Path) -> Result<RunRecord> {
    let sim_cfg = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid("[simulate] section is missing".into()))?;
    let rec = record("simulate", cfg, &[])?;
    let theta = HyperParams::from_natural(&sim_cfg.theta).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let cells = sim_cfg.cells();
    let (mesh, _) = fit_mesh(cfg, &cells)?;
    let sim = simulate_with(&theta, &mesh, &cells, &sim_cfg.years(), cfg.seed, sim_cfg.beta0)?;
    #[derive(Serialize)]
    struct Truth {
        theta: NaturalParams,
        beta0: f64,
        vertices: Vec<Point>,
        trend: Vec<f64>,
    }
    let truth = Truth {
        theta: sim_cfg.theta,
        beta0: sim.beta0,
        vertices: mesh.vertices().to_vec(),
        trend: sim.trend_field(),
    };
    let mut files = OutputSet::default();
    files.add(ANOMALIES, anomaly_csv(&sim.anomalies.panel));
    files.add(CONSTANTS, constants_csv(&sim.anomalies));
    files.add(TRUTH, to_json(&truth)?);
    finish(out, files, rec)
}

/// Serialized form of a [`ThetaGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub points: Vec<[f64; N_HYPER]>,
    pub log_posterior: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub mode_index: usize,
    pub transform: Option<Vec<[f64; N_HYPER]>>,
    pub z: Vec<[f64; N_HYPER]>,
}

impl From<&ThetaGrid> for GridFile {
    fn from(g: &ThetaGrid) -> Self {
        Self {
            points: g.points.iter().map(HyperParams::to_array).collect(),
            log_posterior: g.log_posterior.clone(),
            log_weights: g.log_weights.clone(),
            mode_index: g.mode_index,
            transform: g
                .transform
                .as_ref()
                .map(|l| (0..N_HYPER).map(|i| std::array::from_fn(|j| l[(i, j)])).collect()),
            z: g.z.clone(),
        }
    }
}

impl GridFile {
    pub fn into_grid(self) -> Result<ThetaGrid> {
        let n = self.points.len();
        if n == 0 || self.log_posterior.len() != n || self.log_weights.len() != n || self.z.len() != n || self.mode_index >= n
        {
            return Err(Error::InvalidParameters("inconsistent θ grid".into()));
        }
        Ok(ThetaGrid {
            points: self.points.into_iter().map(HyperParams::from_array).collect(),
            log_posterior: self.log_posterior,
            log_weights: self.log_weights,
            mode_index: self.mode_index,
            transform: self
                .transform
                .map(|rows| nalgebra::DMatrix::from_fn(N_HYPER, N_HYPER, |i, j| rows[i][j])),
            z: self.z,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub mode: HyperParams,
    pub mode_natural: NaturalParams,
    pub log_posterior: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub n_cells: usize,
    pub n_years: usize,
    pub n_observations: usize,
    pub n_vertices: usize,
    pub grid_points: usize,
    pub hyper: HyperSummaries,
}

/// Result of fitting a panel of anomalies.
#[derive(Debug, Clone)]
pub struct Fit {
    pub mesh: Mesh,
    pub model_prior: HyperPrior,
    pub grid: ThetaGrid,
    pub summary: FitSummary,
}

/// Mode search, grid exploration and hyperparameter summaries.
pub fn fit_anomalies(cfg: &Config, anomalies: &AnomalyPanel) -> Result<(Fit, Model)> {
    let cells = &anomalies.panel.cells;
    let (mesh, prior) = fit_mesh(cfg, cells)?;
    let panel = anomalies.panel.to_observations()?;
    let model = Model::new(panel, &mesh, prior)?;
    let mut init = HyperParams::from_array(prior.mean);
    init.log_prec_eps = 0.0;
    let mode = find_mode(&model, &init, &cfg.inference.optim())?;
    let grid = explore_model_grid(&model, &mode.theta, cfg.inference.hessian_step);
    let summary = FitSummary {
        mode: *grid.mode(),
        mode_natural: grid.mode().to_natural(),
        log_posterior: grid.log_posterior[grid.mode_index],
        evaluations: mode.evaluations,
        converged: mode.converged,
        n_cells: cells.len(),
        n_years: anomalies.panel.years.len(),
        n_observations: model.panel().n_obs(),
        n_vertices: mesh.n_vertices(),
        grid_points: grid.len(),
        hyper: hyper_posteriors(&grid)?,
    };
    Ok((
        Fit {
            mesh,
            model_prior: prior,
            grid,
            summary,
        },
        model,
    ))
}

fn load_anomalies(cfg: &Config) -> Result<(AnomalyPanel, Vec<std::path::PathBuf>)> {
    let path = cfg.input(&cfg.data.anomalies, "anomalies")?;
    let panel = read_anomaly_csv(&path)?;
    let mut inputs = vec![path];
    let anomalies = match &cfg.data.constants {
        None => AnomalyPanel::identity(panel),
        Some(c) => {
            let cpath = cfg.resolve(c);
            let table: std::collections::HashMap<CellKey, Standardization> = read_constants_csv(&cpath)?
                .into_iter()
                .map(|(p, s)| (super::data::cell_key(p), s))
                .collect();
            inputs.push(cpath);
            let constants = panel
                .cells
                .iter()
                .map(|p| {
                    table
                        .get(&super::data::cell_key(*p))
                        .copied()
                        .ok_or(Error::MissingConstants { lon: p[0], lat: p[1] })
                })
                .collect::<Result<_>>()?;
            AnomalyPanel {
                panel,
                constants,
                dropped: Vec::new(),
            }
        }
    };
    Ok((anomalies, inputs))
}

/// Fits the configured anomalies and stores the mesh, θ grid and
/// hyperparameter summaries.
pub fn run_fit(cfg: &Config, out: &Path) -> Result<RunRecord> {
    let (anomalies, inputs) = load_anomalies(cfg)?;
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let mut rec = record("fit", cfg, &input_refs)?;
    let (fit, _) = fit_anomalies(cfg, &anomalies)?;
    if !fit.summary.converged {
        rec.warnings.push("mode search stopped at the evaluation limit".into());
    }
    let mut files = OutputSet::default();
    files.add(MESH, fit.mesh.to_text());
    files.add(GRID, to_json(&GridFile::from(&fit.grid))?);
    files.add(HYPER, to_json(&fit.summary)?);
    finish(out, files, rec)
}

/// Band summary for one level and method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandSummary {
    pub alpha: f64,
    pub method: BandMethod,
    pub band_rho: f64,
    pub n_excluding: usize,
    pub coverage_estimate: Option<f64>,
    pub coverage_se: Option<f64>,
}

impl BandSummary {
    fn of(b: &BandResult) -> Self {
        Self {
            alpha: b.alpha,
            method: b.method,
            band_rho: b.band_rho,
            n_excluding: b.avoid_set.iter().filter(|x| **x).count(),
            coverage_estimate: b.coverage_estimate,
            coverage_se: b.coverage_se,
        }
    }
}

/// Bands and per-cell rows for every requested level.
pub struct BandsOutput {
    pub rows: Vec<(f64, Vec<CellRow>)>,
    pub summaries: Vec<BandSummary>,
}

/// Credible bands from a fitted grid; bounds are reported in data units
/// when standardization constants are available.
pub fn compute_bands(cfg: &Config, anomalies: &AnomalyPanel, mesh: &Mesh, grid: &ThetaGrid) -> Result<BandsOutput> {
    let cells = &anomalies.panel.cells;
    let (_, diameter) = domain(cells)?;
    let prior = cfg.prior.prior(diameter)?;
    let model = Model::new(anomalies.panel.to_observations()?, mesh, prior)?;
    let mixture = TrendMixture::new(grid, &model)?;
    let projector = model.projector().clone();
    let marginals = mixture.marginals(Some(&projector))?;
    let samples = mixture.sample(cfg.bands.samples, cfg.seed)?.project(&projector)?;
    let scale: Vec<f64> = anomalies.constants.iter().map(|c| c.sd).collect();
    let means = marginals.means();
    let sds = marginals.sds();
    let q025 = marginals.quantiles(0.025);
    let q975 = marginals.quantiles(0.975);
    let u = cfg.bands.level;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &alpha in &cfg.bands.alpha {
        let pw = pointwise_band(&marginals, alpha, u)?;
        let sim = simultaneous_band(&samples, &marginals, alpha, u, cfg.bands.tol)?;
        let bon = bonferroni_band(&marginals, alpha, cells.len(), u)?;
        for b in [&pw, &sim, &bon] {
            summaries.push(BandSummary::of(b));
        }
        let r = (0..cells.len())
            .map(|i| CellRow {
                lon: cells[i][0],
                lat: cells[i][1],
                post_mean: means[i] * scale[i],
                post_sd: sds[i] * scale[i],
                q025: q025[i] * scale[i],
                q975: q975[i] * scale[i],
                pointwise_reject: pw.avoid_set[i],
                simultaneous_avoid: sim.avoid_set[i],
                bonferroni_reject: bon.avoid_set[i],
            })
            .collect();
        rows.push((alpha, r));
    }
    Ok(BandsOutput { rows, summaries })
}

fn load_grid(out: &Path) -> Result<(Mesh, ThetaGrid)> {
    let mesh = Mesh::from_text(&read_text(&out.join(MESH))?)?;
    let path = out.join(GRID);
    let grid: GridFile = serde_json::from_str(&read_text(&path)?).map_err(|e| Error::InputMalformed {
        path: path.clone(),
        message: e.to_string(),
    })?;
    Ok((mesh, grid.into_grid()?))
}

/// Bands, avoidance sets and map files from a previous `fit` in `out`.
pub fn run_bands(cfg: &Config, out: &Path) -> Result<RunRecord> {
    let (anomalies, mut inputs) = load_anomalies(cfg)?;
    inputs.push(out.join(MESH));
    inputs.push(out.join(GRID));
    let (mesh, grid) = load_grid(out)?;
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let rec = record("bands", cfg, &input_refs)?;
    let bands = compute_bands(cfg, &anomalies, &mesh, &grid)?;
    let spacing = infer_spacing(&anomalies.panel.cells)?;
    let mut files = OutputSet::default();
    for (alpha, rows) in &bands.rows {
        files.add(format!("cells_alpha_{alpha}.csv"), cells_csv(rows));
        files.add(format!("avoid_alpha_{alpha}.csv"), avoid_csv(rows));
        files.add(format!("cells_alpha_{alpha}.geojson"), cells_geojson(rows, spacing));
    }
    files.add(BANDS, to_json(&bands.summaries)?);
    finish(out, files, rec)
}

/// Plain-text summary of the fit and band outputs in `out`.
pub fn run_report(out: &Path) -> Result<String> {
    let hyper_path = out.join(HYPER);
    let fit: FitSummary = serde_json::from_str(&read_text(&hyper_path)?).map_err(|e| Error::InputMalformed {
        path: hyper_path.clone(),
        message: e.to_string(),
    })?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "cells {}  years {}  observations {}  mesh vertices {}  grid points {}",
        fit.n_cells, fit.n_years, fit.n_observations, fit.n_vertices, fit.grid_points
    );
    let _ = writeln!(s, "\nhyperparameter  mean  sd  q05  q50  q95");
    let h = &fit.hyper;
    for (name, v) in [
        ("noise_variance", h.noise_variance),
        ("phi", h.phi),
        ("range_beta", h.range_beta),
        ("sigma2_beta", h.sigma2_beta),
        ("range_xi", h.range_xi),
        ("sigma2_xi", h.sigma2_xi),
    ] {
        let _ = writeln!(
            s,
            "{name}  {}  {}  {}  {}  {}",
            fmt_f64(v.mean),
            fmt_f64(v.sd),
            fmt_f64(v.q05),
            fmt_f64(v.q50),
            fmt_f64(v.q95)
        );
    }
    let bands_path = out.join(BANDS);
    if bands_path.exists() {
        let bands: Vec<BandSummary> = serde_json::from_str(&read_text(&bands_path)?).map_err(|e| Error::InputMalformed {
            path: bands_path.clone(),
            message: e.to_string(),
        })?;
        let _ = writeln!(s, "\nalpha  method  band_rho  cells excluding zero");
        for b in bands {
            let method = serde_json::to_value(b.method).map_err(|e| Error::InvalidParameters(e.to_string()))?;
            let _ = writeln!(
                s,
                "{}  {}  {}  {}",
                b.alpha,
                method.as_str().unwrap_or_default(),
                fmt_f64(b.band_rho),
                b.n_excluding
            );
        }
    }
    let mut files = OutputSet::default();
    files.add(REPORT, s.clone());
    files.write(out)?;
    Ok(s)
}
