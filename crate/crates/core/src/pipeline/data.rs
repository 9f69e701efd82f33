use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::model::ObservationPanel;

/// Fraction of non-missing days a season needs to produce a mean.
pub const SEASON_COMPLETENESS: f64 = 0.8;
/// June–August.
pub const SEASON_MONTHS: [u32; 3] = [6, 7, 8];
/// Years per unit of the time covariate.
pub const YEARS_PER_UNIT: f64 = 10.0;

/// Integer key identifying a cell by its coordinates.
pub type CellKey = (i64, i64);

pub fn cell_key(p: Point) -> CellKey {
    ((p[0] * 1e6).round() as i64, (p[1] * 1e6).round() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRecord {
    pub lon: f64,
    pub lat: f64,
    pub date: NaiveDate,
    pub value: Option<f64>,
}

/// Daily series per cell, sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyGrid {
    cells: Vec<Point>,
    series: Vec<Vec<(NaiveDate, Option<f64>)>>,
}

impl DailyGrid {
    /// Groups records by cell in order of first appearance. Duplicate
    /// (cell, date) pairs are rejected; dates absent from the input count
    /// as missing days.
    pub fn new(records: &[DailyRecord]) -> Result<Self> {
        let mut index: HashMap<CellKey, usize> = HashMap::new();
        let mut cells = Vec::new();
        let mut series: Vec<Vec<(NaiveDate, Option<f64>)>> = Vec::new();
        for r in records {
            let p = [r.lon, r.lat];
            if !r.lon.is_finite() || !r.lat.is_finite() {
                return Err(Error::InvalidParameters("non-finite cell coordinates".into()));
            }
            let i = *index.entry(cell_key(p)).or_insert_with(|| {
                cells.push(p);
                series.push(Vec::new());
                cells.len() - 1
            });
            series[i].push((r.date, r.value.filter(|v| v.is_finite())));
        }
        for (i, s) in series.iter_mut().enumerate() {
            s.sort_by_key(|e| e.0);
            if s.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameters(format!(
                    "duplicate date in cell ({}, {})",
                    cells[i][0], cells[i][1]
                )));
            }
        }
        Ok(Self { cells, series })
    }

    pub fn cells(&self) -> &[Point] {
        &self.cells
    }

    pub fn series(&self, i: usize) -> &[(NaiveDate, Option<f64>)] {
        &self.series[i]
    }
}

/// One value per cell and year; `None` marks a masked year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearlyPanel {
    pub cells: Vec<Point>,
    pub years: Vec<i32>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl YearlyPanel {
    pub fn new(cells: Vec<Point>, years: Vec<i32>, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if values.len() != cells.len() {
            return Err(Error::DimensionMismatch {
                expected: cells.len(),
                found: values.len(),
            });
        }
        if let Some(row) = values.iter().find(|r| r.len() != years.len()) {
            return Err(Error::DimensionMismatch {
                expected: years.len(),
                found: row.len(),
            });
        }
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidParameters("years must be consecutive".into()));
        }
        Ok(Self { cells, years, values })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Model panel with time in decades from the middle of the period.
    pub fn to_observations(&self) -> Result<ObservationPanel> {
        ObservationPanel::new(self.cells.clone(), decade_times(&self.years), self.values.clone())
    }
}

/// `(year − midpoint) / 10` for each year.
pub fn decade_times(years: &[i32]) -> Vec<f64> {
    let (Some(first), Some(last)) = (years.first(), years.last()) else {
        return Vec::new();
    };
    let mid = 0.5 * (*first as f64 + *last as f64);
    years.iter().map(|&y| (y as f64 - mid) / YEARS_PER_UNIT).collect()
}

fn season_length(year: i32) -> i64 {
    let start = NaiveDate::from_ymd_opt(year, SEASON_MONTHS[0], 1).expect("valid date");
    let end = NaiveDate::from_ymd_opt(year, SEASON_MONTHS[2] + 1, 1).expect("valid date");
    (end - start).num_days()
}

/// JJA mean per cell and year over the years spanned by the JJA data. A
/// season with fewer than [`SEASON_COMPLETENESS`] of its days present is
/// masked; a cell with no usable season is an error.
pub fn seasonal_means(daily: &DailyGrid) -> Result<YearlyPanel> {
    let mut sums: Vec<BTreeMap<i32, (f64, usize)>> = vec![BTreeMap::new(); daily.cells.len()];
    let mut first = i32::MAX;
    let mut last = i32::MIN;
    for (i, s) in daily.series.iter().enumerate() {
        for (date, v) in s {
            if !SEASON_MONTHS.contains(&date.month()) {
                continue;
            }
            first = first.min(date.year());
            last = last.max(date.year());
            if let Some(v) = v {
                let e = sums[i].entry(date.year()).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    if first > last {
        return Err(Error::InvalidParameters("no summer days in the input".into()));
    }
    let years: Vec<i32> = (first..=last).collect();
    let mut values = Vec::with_capacity(daily.cells.len());
    for (i, cell) in daily.cells.iter().enumerate() {
        let row: Vec<Option<f64>> = years
            .iter()
            .map(|y| {
                sums[i].get(y).and_then(|&(s, n)| {
                    (n as f64 >= SEASON_COMPLETENESS * season_length(*y) as f64).then(|| s / n as f64)
                })
            })
            .collect();
        if row.iter().all(Option::is_none) {
            return Err(Error::EmptySeason { lon: cell[0], lat: cell[1] });
        }
        values.push(row);
    }
    YearlyPanel::new(daily.cells.clone(), years, values)
}

/// Mean and sample standard deviation used to standardize one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

/// Standardized anomalies with the constants of every retained cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyPanel {
    pub panel: YearlyPanel,
    pub constants: Vec<Standardization>,
    /// Cells removed because they could not be standardized.
    pub dropped: Vec<(Point, String)>,
}

impl AnomalyPanel {
    /// Panel of values taken as already standardized.
    pub fn identity(panel: YearlyPanel) -> Self {
        let constants = vec![Standardization { mean: 0.0, sd: 1.0 }; panel.n_cells()];
        Self {
            panel,
            constants,
            dropped: Vec::new(),
        }
    }

    pub fn constants_by_cell(&self) -> HashMap<CellKey, Standardization> {
        self.panel
            .cells
            .iter()
            .zip(&self.constants)
            .map(|(p, c)| (cell_key(*p), *c))
            .collect()
    }
}

/// Mean-centres each series and divides by its sample standard deviation.
/// Cells with fewer than two values or zero spread are dropped and
/// reported in [`AnomalyPanel::dropped`].
pub fn standardize(panel: &YearlyPanel) -> Result<AnomalyPanel> {
    let mut cells = Vec::new();
    let mut values = Vec::new();
    let mut constants = Vec::new();
    let mut dropped = Vec::new();
    for (cell, row) in panel.cells.iter().zip(&panel.values) {
        let present: Vec<f64> = row.iter().flatten().copied().collect();
        let n = present.len() as f64;
        let mean = present.iter().sum::<f64>() / n;
        let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if present.len() < 2 || !(var > 0.0) {
            dropped.push((*cell, Error::ZeroVariance { lon: cell[0], lat: cell[1] }.to_string()));
            continue;
        }
        let sd = var.sqrt();
        cells.push(*cell);
        values.push(row.iter().map(|v| v.map(|v| (v - mean) / sd)).collect());
        constants.push(Standardization { mean, sd });
    }
    if cells.is_empty() {
        let c = panel.cells.first().copied().unwrap_or([f64::NAN, f64::NAN]);
        return Err(Error::ZeroVariance { lon: c[0], lat: c[1] });
    }
    Ok(AnomalyPanel {
        panel: YearlyPanel::new(cells, panel.years.clone(), values)?,
        constants,
        dropped,
    })
}

/// Smallest positive gap between distinct coordinate values.
fn grid_spacing(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 1e-9)
        .min_by(f64::total_cmp)
}

/// Regular grid step in each direction.
pub fn infer_spacing(cells: &[Point]) -> Result<[f64; 2]> {
    let sx = grid_spacing(cells.iter().map(|p| p[0]));
    let sy = grid_spacing(cells.iter().map(|p| p[1]));
    match (sx, sy) {
        (Some(x), Some(y)) => Ok([x, y]),
        (Some(x), None) => Ok([x, x]),
        (None, Some(y)) => Ok([y, y]),
        (None, None) => Err(Error::InvalidParameters("cannot infer grid spacing from one cell".into())),
    }
}

/// Averages anomalies over `factor × factor` blocks of a regular grid. A
/// coarse cell sits at the centre of its block and is masked in a year
/// only if every fine cell is. Its constants are the averages of the fine
/// cells' constants.
pub fn upscale(anomalies: &AnomalyPanel, factor: usize) -> Result<AnomalyPanel> {
    if factor < 2 {
        return Err(Error::InvalidParameters(format!("upscaling factor must be at least 2, got {factor}")));
    }
    let panel = &anomalies.panel;
    let spacing = infer_spacing(&panel.cells)?;
    let x0 = panel.cells.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let y0 = panel.cells.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let f = factor as f64;
    let block = |p: Point| {
        (
            ((p[0] - x0) / (spacing[0] * f) + 1e-6).floor() as i64,
            ((p[1] - y0) / (spacing[1] * f) + 1e-6).floor() as i64,
        )
    };
    let mut order: Vec<(i64, i64)> = Vec::new();
    let mut members: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in panel.cells.iter().enumerate() {
        let b = block(*p);
        members
            .entry(b)
            .or_insert_with(|| {
                order.push(b);
                Vec::new()
            })
            .push(i);
    }
    order.sort_by_key(|b| (b.1, b.0));
    let m = panel.years.len();
    let mut cells = Vec::with_capacity(order.len());
    let mut values = Vec::with_capacity(order.len());
    let mut constants = Vec::with_capacity(order.len());
    for b in &order {
        let idx = &members[b];
        cells.push([
            x0 + (b.0 as f64 * f + (f - 1.0) / 2.0) * spacing[0],
            y0 + (b.1 as f64 * f + (f - 1.0) / 2.0) * spacing[1],
        ]);
        values.push(
            (0..m)
                .map(|t| {
                    let present: Vec<f64> = idx.iter().filter_map(|&i| panel.values[i][t]).collect();
                    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
                })
                .collect(),
        );
        let k = idx.len() as f64;
        constants.push(Standardization {
            mean: idx.iter().map(|&i| anomalies.constants[i].mean).sum::<f64>() / k,
            sd: idx.iter().map(|&i| anomalies.constants[i].sd).sum::<f64>() / k,
        });
    }
    Ok(AnomalyPanel {
        panel: YearlyPanel::new(cells, panel.years.clone(), values)?,
        constants,
        dropped: anomalies.dropped.clone(),
    })
}

/// Converts standardized trends (per decade) to data units per decade by
/// multiplying with each cell's standard deviation.
pub fn rescale_trend(cells: &[Point], values: &[f64], constants: &HashMap<CellKey, Standardization>) -> Result<Vec<f64>> {
    if cells.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: cells.len(),
            found: values.len(),
        });
    }
    cells
        .iter()
        .zip(values)
        .map(|(p, v)| {
            constants
                .get(&cell_key(*p))
                .map(|c| v * c.sd)
                .ok_or(Error::MissingConstants { lon: p[0], lat: p[1] })
        })
        .collect()
}
