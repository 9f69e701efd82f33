use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::data::{cell_key, AnomalyPanel, DailyRecord, Standardization, YearlyPanel};
use crate::error::{Error, Result};
use crate::mesh::Point;

/// Float formatting with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn malformed(path: &Path, message: impl Into<String>) -> Error {
    Error::InputMalformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Column positions of `names` in the header.
fn columns(path: &Path, reader: &mut csv::Reader<fs::File>, names: &[&str]) -> Result<Vec<usize>> {
    let header = reader.headers().map_err(|e| malformed(path, e.to_string()))?.clone();
    names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(n))
                .ok_or_else(|| malformed(path, format!("missing column `{n}`")))
        })
        .collect()
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| malformed(path, format!("line {line}: `{field}` is not a number")))
}

/// Empty, `NA` and `NaN` fields are missing values.
fn parse_optional(path: &Path, line: u64, field: &str) -> Result<Option<f64>> {
    if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    parse_f64(path, line, field).map(Some)
}

fn records(path: &Path, names: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let mut reader = open_csv(path)?;
    let cols = columns(path, &mut reader, names)?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| malformed(path, e.to_string()))?;
        let fields = cols
            .iter()
            .map(|&c| rec.get(c).map(str::to_owned).ok_or_else(|| malformed(path, format!("line {line}: too few fields"))))
            .collect::<Result<Vec<_>>>()?;
        out.push((line, fields));
    }
    if out.is_empty() {
        return Err(malformed(path, "no data rows"));
    }
    Ok(out)
}

/// Reads `lon,lat,date,value` with ISO dates.
pub fn read_daily_csv(path: &Path) -> Result<Vec<DailyRecord>> {
    records(path, &["lon", "lat", "date", "value"])?
        .into_iter()
        .map(|(line, f)| {
            let date = NaiveDate::parse_from_str(&f[2], "%Y-%m-%d")
                .map_err(|_| malformed(path, format!("line {line}: bad date `{}`", f[2])))?;
            Ok(DailyRecord {
                lon: parse_f64(path, line, &f[0])?,
                lat: parse_f64(path, line, &f[1])?,
                date,
                value: parse_optional(path, line, &f[3])?,
            })
        })
        .collect()
}

/// Reads `lon,lat,year,anomaly`; years absent for a cell are masked.
pub fn read_anomaly_csv(path: &Path) -> Result<YearlyPanel> {
    let rows = records(path, &["lon", "lat", "year", "anomaly"])?;
    let mut cells: Vec<Point> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut entries: Vec<(usize, i32, Option<f64>)> = Vec::with_capacity(rows.len());
    for (line, f) in rows {
        let p = [parse_f64(path, line, &f[0])?, parse_f64(path, line, &f[1])?];
        let year: i32 = f[2]
            .parse()
            .map_err(|_| malformed(path, format!("line {line}: bad year `{}`", f[2])))?;
        let i = *index.entry(cell_key(p)).or_insert_with(|| {
            cells.push(p);
            cells.len() - 1
        });
        entries.push((i, year, parse_optional(path, line, &f[3])?));
    }
    let first = entries.iter().map(|e| e.1).min().expect("non-empty");
    let last = entries.iter().map(|e| e.1).max().expect("non-empty");
    let years: Vec<i32> = (first..=last).collect();
    let mut values = vec![vec![None; years.len()]; cells.len()];
    let mut seen = vec![vec![false; years.len()]; cells.len()];
    for (i, y, v) in entries {
        let t = (y - first) as usize;
        if seen[i][t] {
            return Err(malformed(path, format!("duplicate year {y} for cell ({}, {})", cells[i][0], cells[i][1])));
        }
        seen[i][t] = true;
        values[i][t] = v;
    }
    YearlyPanel::new(cells, years, values)
}

/// Reads `lon,lat,mean,sd`.
pub fn read_constants_csv(path: &Path) -> Result<Vec<(Point, Standardization)>> {
    records(path, &["lon", "lat", "mean", "sd"])?
        .into_iter()
        .map(|(line, f)| {
            let sd = parse_f64(path, line, &f[3])?;
            if !(sd > 0.0) {
                return Err(malformed(path, format!("line {line}: sd must be positive")));
            }
            Ok((
                [parse_f64(path, line, &f[0])?, parse_f64(path, line, &f[1])?],
                Standardization {
                    mean: parse_f64(path, line, &f[2])?,
                    sd,
                },
            ))
        })
        .collect()
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn anomaly_csv(panel: &YearlyPanel) -> String {
    let rows = panel.cells.iter().zip(&panel.values).flat_map(|(p, row)| {
        panel.years.iter().zip(row).map(move |(y, v)| {
            vec![
                fmt_f64(p[0]),
                fmt_f64(p[1]),
                y.to_string(),
                v.map(fmt_f64).unwrap_or_default(),
            ]
        })
    });
    csv_text(&["lon", "lat", "year", "anomaly"], rows)
}

pub fn constants_csv(anomalies: &AnomalyPanel) -> String {
    let rows = anomalies
        .panel
        .cells
        .iter()
        .zip(&anomalies.constants)
        .map(|(p, c)| vec![fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(c.mean), fmt_f64(c.sd)]);
    csv_text(&["lon", "lat", "mean", "sd"], rows)
}

/// One reporting row per data cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRow {
    pub lon: f64,
    pub lat: f64,
    pub post_mean: f64,
    pub post_sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub pointwise_reject: bool,
    pub simultaneous_avoid: bool,
    pub bonferroni_reject: bool,
}

pub const CELL_HEADER: [&str; 9] = [
    "lon",
    "lat",
    "post_mean",
    "post_sd",
    "q025",
    "q975",
    "pointwise_reject",
    "simultaneous_avoid",
    "bonferroni_reject",
];

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

pub fn cells_csv(rows: &[CellRow]) -> String {
    csv_text(
        &CELL_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.lon),
                fmt_f64(r.lat),
                fmt_f64(r.post_mean),
                fmt_f64(r.post_sd),
                fmt_f64(r.q025),
                fmt_f64(r.q975),
                flag(r.pointwise_reject),
                flag(r.simultaneous_avoid),
                flag(r.bonferroni_reject),
            ]
        }),
    )
}

/// Cells in any rejection or avoidance set.
pub fn avoid_csv(rows: &[CellRow]) -> String {
    csv_text(
        &["lon", "lat", "pointwise_reject", "simultaneous_avoid", "bonferroni_reject"],
        rows.iter()
            .filter(|r| r.pointwise_reject || r.simultaneous_avoid || r.bonferroni_reject)
            .map(|r| {
                vec![
                    fmt_f64(r.lon),
                    fmt_f64(r.lat),
                    flag(r.pointwise_reject),
                    flag(r.simultaneous_avoid),
                    flag(r.bonferroni_reject),
                ]
            }),
    )
}

/// GeoJSON feature collection of square cells of side `spacing`.
pub fn cells_geojson(rows: &[CellRow], spacing: [f64; 2]) -> String {
    let (hx, hy) = (spacing[0] / 2.0, spacing[1] / 2.0);
    let mut s = String::from("{\"type\":\"FeatureCollection\",\"features\":[");
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let ring = [
            [r.lon - hx, r.lat - hy],
            [r.lon + hx, r.lat - hy],
            [r.lon + hx, r.lat + hy],
            [r.lon - hx, r.lat + hy],
            [r.lon - hx, r.lat - hy],
        ];
        let coords: Vec<String> = ring
            .iter()
            .map(|c| format!("[{},{}]", fmt_f64(c[0]), fmt_f64(c[1])))
            .collect();
        let _ = write!(
            s,
            "\n{{\"type\":\"Feature\",\"geometry\":{{\"type\":\"Polygon\",\"coordinates\":[[{}]]}},\"properties\":{{\
             \"lon\":{},\"lat\":{},\"post_mean\":{},\"post_sd\":{},\"q025\":{},\"q975\":{},\
             \"pointwise_reject\":{},\"simultaneous_avoid\":{},\"bonferroni_reject\":{}}}}}",
            coords.join(","),
            fmt_f64(r.lon),
            fmt_f64(r.lat),
            fmt_f64(r.post_mean),
            fmt_f64(r.post_sd),
            fmt_f64(r.q025),
            fmt_f64(r.q975),
            r.pointwise_reject,
            r.simultaneous_avoid,
            r.bonferroni_reject,
        );
    }
    s.push_str("\n]}\n");
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Collects output files in memory so that nothing is written before the
/// computation has finished.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: BTreeMap<String, Vec<u8>>,
}

impl OutputSet {
    pub fn add(&mut self, name: impl Into<String>, content: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), content.into());
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.files.keys()
    }

    /// Writes every file into `dir` and returns their hashes.
    pub fn write(self, dir: &Path) -> Result<BTreeMap<String, String>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut hashes = BTreeMap::new();
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            hashes.insert(name, sha256_hex(&bytes));
        }
        Ok(hashes)
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// JSON formatter printing floats with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }
}

/// Compact JSON with full-precision floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidParameters(format!("JSON encoding: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}
