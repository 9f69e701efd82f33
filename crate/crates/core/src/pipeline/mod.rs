//! Data preparation, synthetic data and the end-to-end runs behind the
//! command line.

mod config;
mod data;
mod io;
mod run;
mod simulate;

pub use data::{
    cell_key, decade_times, infer_spacing, rescale_trend, seasonal_means, standardize, upscale, AnomalyPanel, CellKey,
    DailyGrid, DailyRecord, Standardization, YearlyPanel, SEASON_COMPLETENESS, SEASON_MONTHS, YEARS_PER_UNIT,
};
pub use simulate::{simulate, simulate_with, Simulation, BETA0_SD};
pub use config::{BandsConfig, Config, DataConfig, InferenceConfig, MeshConfig, PriorConfig, SimulateConfig};
pub use io::{
    anomaly_csv, avoid_csv, cells_csv, cells_geojson, constants_csv, csv_text, fmt_f64, read_anomaly_csv,
    read_constants_csv, read_daily_csv, sha256_file, sha256_hex, to_json, CellRow, OutputSet, CELL_HEADER,
};
pub use run::{
    compute_bands, fit_anomalies, fit_mesh, run_bands, run_fit, run_prepare, run_report, run_simulate, BandSummary, BandsOutput,
    Fit, FitSummary, GridFile, RunRecord, ANOMALIES, BANDS, CONSTANTS, GRID, HYPER, MANIFEST, MESH, REPORT, TRUTH,
};
