//! Balanced two-period panels: ingestion, validation, CSV round-trips and
//! descriptive summaries.
//!
//! The on-disk format is long: one row per `(unit, period)` with columns
//! `id, t, y, x` and `t` in `{1, 2}`. Units that do not have both periods
//! with finite values are dropped and reported in an [`IngestionLog`].

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::stats;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("duplicate row for unit `{unit}` in period {period}")]
    DuplicateRow { unit: String, period: u8 },
    #[error("unit `{unit}` has period `{value}`; periods must be 1 or 2")]
    InvalidPeriod { unit: String, value: String },
    #[error("line {line}: cannot parse `{value}` in column `{column}`")]
    InvalidValue {
        line: u64,
        column: String,
        value: String,
    },
    #[error("need at least 2 complete units, found {found}")]
    TooFewUnits { found: usize },
    #[error("column lengths differ: {0}")]
    LengthMismatch(String),
    #[error("non-finite {field} for unit index {index}")]
    NonFinite { field: &'static str, index: usize },
}

/// Names of the four long-format columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub id: String,
    pub t: String,
    pub y: String,
    pub x: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            t: "t".into(),
            y: "y".into(),
            x: "x".into(),
        }
    }
}

/// Balanced panel with exactly two periods per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset<T> {
    pub unit_id: Vec<String>,
    pub y1: Vec<T>,
    pub y2: Vec<T>,
    pub x1: Vec<T>,
    pub x2: Vec<T>,
}

/// What happened during [`load_csv`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionLog {
    pub rows_read: usize,
    pub units_seen: usize,
    /// Units observed in only one period.
    pub dropped_unbalanced: Vec<String>,
    /// Units with a missing (`NA`, empty, `NaN`) outcome or regressor.
    pub dropped_missing: Vec<String>,
}

impl IngestionLog {
    pub fn dropped_count(&self) -> usize {
        self.dropped_unbalanced.len() + self.dropped_missing.len()
    }
}

impl<T: Real> PanelDataset<T> {
    /// Builds and validates a dataset; unit ids default to `0..n`.
    pub fn new(y1: Vec<T>, y2: Vec<T>, x1: Vec<T>, x2: Vec<T>) -> Result<Self, PanelError> {
        let ids = (0..y1.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, y1, y2, x1, x2)
    }

    pub fn with_ids(
        unit_id: Vec<String>,
        y1: Vec<T>,
        y2: Vec<T>,
        x1: Vec<T>,
        x2: Vec<T>,
    ) -> Result<Self, PanelError> {
        let d = Self {
            unit_id,
            y1,
            y2,
            x1,
            x2,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), PanelError> {
        let n = self.y1.len();
        for (name, len) in [
            ("y2", self.y2.len()),
            ("x1", self.x1.len()),
            ("x2", self.x2.len()),
            ("unit_id", self.unit_id.len()),
        ] {
            if len != n {
                return Err(PanelError::LengthMismatch(format!(
                    "y1 has {n} entries but {name} has {len}"
                )));
            }
        }
        if n < 2 {
            return Err(PanelError::TooFewUnits { found: n });
        }
        for (field, v) in [
            ("y1", &self.y1),
            ("y2", &self.y2),
            ("x1", &self.x1),
            ("x2", &self.x2),
        ] {
            if let Some(index) = v.iter().position(|z| !z.is_finite()) {
                return Err(PanelError::NonFinite { field, index });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    /// Pooled regressor sample `x1 ++ x2`.
    pub fn pooled_x(&self) -> Vec<T> {
        self.x1.iter().chain(self.x2.iter()).copied().collect()
    }

    pub fn y(&self, period: Period) -> &[T] {
        match period {
            Period::First => &self.y1,
            Period::Second => &self.y2,
        }
    }

    pub fn x(&self, period: Period) -> &[T] {
        match period {
            Period::First => &self.x1,
            Period::Second => &self.x2,
        }
    }

    /// Applies `y -> a*y + b` to both periods.
    pub fn affine_outcome(&self, a: T, b: T) -> Self {
        let f = |v: &Vec<T>| v.iter().map(|&y| a * y + b).collect();
        Self {
            unit_id: self.unit_id.clone(),
            y1: f(&self.y1),
            y2: f(&self.y2),
            x1: self.x1.clone(),
            x2: self.x2.clone(),
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> PanelDataset<U> {
        let f = |v: &Vec<T>| v.iter().map(|&z| U::lit(z.as_f64())).collect();
        PanelDataset {
            unit_id: self.unit_id.clone(),
            y1: f(&self.y1),
            y2: f(&self.y2),
            x1: f(&self.x1),
            x2: f(&self.x2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Period {
    First,
    Second,
}

impl Period {
    pub const BOTH: [Period; 2] = [Period::First, Period::Second];

    pub fn number(self) -> u8 {
        match self {
            Period::First => 1,
            Period::Second => 2,
        }
    }
}

const MISSING_TOKENS: [&str; 7] = ["", "NA", "na", "NaN", "nan", ".", "null"];

#[derive(Default, Clone, Copy)]
struct Slot {
    seen: bool,
    value: Option<(f64, f64)>,
}

/// Reads a long-format panel from `path`.
pub fn load_csv<T: Real>(
    path: impl AsRef<Path>,
    columns: &ColumnMap,
) -> Result<(PanelDataset<T>, IngestionLog), PanelError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PanelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, columns)
}

/// Reads a long-format panel from any reader.
pub fn read_csv<T: Real, R: Read>(
    reader: R,
    columns: &ColumnMap,
) -> Result<(PanelDataset<T>, IngestionLog), PanelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let (ci, ct, cy, cx) = (
        find(&columns.id)?,
        find(&columns.t)?,
        find(&columns.y)?,
        find(&columns.x)?,
    );

    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut slots: Vec<[Slot; 2]> = Vec::new();
    let mut log = IngestionLog::default();

    for record in rdr.records() {
        let record = record?;
        log.rows_read += 1;
        let line = record.position().map_or(0, |p| p.line());
        let get = |c: usize| record.get(c).unwrap_or("");
        let unit = get(ci).to_string();
        let period = match get(ct) {
            "1" => 0,
            "2" => 1,
            other => {
                return Err(PanelError::InvalidPeriod {
                    unit,
                    value: other.to_string(),
                })
            }
        };
        let parse = |c: usize, name: &str| -> Result<Option<f64>, PanelError> {
            let raw = get(c);
            if MISSING_TOKENS.contains(&raw) {
                return Ok(None);
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                Ok(_) => Ok(None),
                Err(_) => Err(PanelError::InvalidValue {
                    line,
                    column: name.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        let y = parse(cy, &columns.y)?;
        let x = parse(cx, &columns.x)?;

        let slot_idx = *index.entry(unit.clone()).or_insert_with(|| {
            order.push(unit.clone());
            slots.push([Slot::default(); 2]);
            slots.len() - 1
        });
        let slot = &mut slots[slot_idx][period];
        if slot.seen {
            return Err(PanelError::DuplicateRow {
                unit,
                period: period as u8 + 1,
            });
        }
        slot.seen = true;
        slot.value = y.zip(x);
    }
    log.units_seen = order.len();

    let mut ds = PanelDataset {
        unit_id: Vec::new(),
        y1: Vec::new(),
        y2: Vec::new(),
        x1: Vec::new(),
        x2: Vec::new(),
    };
    for (unit, [s1, s2]) in order.into_iter().zip(slots) {
        if !(s1.seen && s2.seen) {
            log.dropped_unbalanced.push(unit);
            continue;
        }
        match (s1.value, s2.value) {
            (Some((y1, x1)), Some((y2, x2))) => {
                ds.unit_id.push(unit);
                ds.y1.push(T::lit(y1));
                ds.y2.push(T::lit(y2));
                ds.x1.push(T::lit(x1));
                ds.x2.push(T::lit(x2));
            }
            _ => log.dropped_missing.push(unit),
        }
    }
    if ds.n() < 2 {
        return Err(PanelError::TooFewUnits { found: ds.n() });
    }
    ds.validate()?;
    Ok((ds, log))
}

/// Writes the panel in long format (`id,t,y,x`). Values use the shortest
/// representation that parses back to the same `f64`, so reloading with
/// [`load_csv`] reproduces the dataset exactly.
pub fn write_csv<T: Real, W: Write>(data: &PanelDataset<T>, out: W) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "t", "y", "x"])?;
    for i in 0..data.n() {
        for (t, y, x) in [("1", data.y1[i], data.x1[i]), ("2", data.y2[i], data.x2[i])] {
            w.write_record([
                data.unit_id[i].as_str(),
                t,
                &y.as_f64().to_string(),
                &x.as_f64().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|source| PanelError::Io {
        path: PathBuf::from("<writer>"),
        source,
    })?;
    Ok(())
}

pub fn save_csv<T: Real>(data: &PanelDataset<T>, path: impl AsRef<Path>) -> Result<(), PanelError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| PanelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(data, std::io::BufWriter::new(file))
}

/// Per-variable descriptive statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub name: String,
    pub pooled_mean: f64,
    pub pooled_sd: f64,
    /// Share of the total sum of squares that is within-unit, in percent.
    pub within_pct: f64,
    pub period1_mean: f64,
    pub period1_sd: f64,
    pub period2_mean: f64,
    pub period2_sd: f64,
}

/// Histogram of `x2 - x1` with a dedicated bin for exact zeros.
///
/// `zero_count` holds units with no change; the remaining values are binned
/// on `edges` (Freedman-Diaconis width). `zero_count + sum(counts) == n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeHistogram {
    pub zero_count: usize,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl ChangeHistogram {
    pub fn total(&self) -> usize {
        self.zero_count + self.counts.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub n: usize,
    pub variables: Vec<VariableSummary>,
    pub delta_x_histogram: ChangeHistogram,
}

/// Within-unit share of the total sum of squares, in percent:
/// `100 * sum_it (z_it - zbar_i)^2 / sum_it (z_it - zbar)^2`.
pub fn within_percent(z1: &[f64], z2: &[f64]) -> f64 {
    let pooled: Vec<f64> = z1.iter().chain(z2).copied().collect();
    let grand = stats::mean(&pooled);
    let mut total = 0.0;
    let mut within = 0.0;
    for (&a, &b) in z1.iter().zip(z2) {
        let unit_mean = 0.5 * (a + b);
        within += (a - unit_mean).powi(2) + (b - unit_mean).powi(2);
        total += (a - grand).powi(2) + (b - grand).powi(2);
    }
    if total <= 0.0 {
        return 0.0;
    }
    (100.0 * within / total).clamp(0.0, 100.0)
}

fn summarize_variable(name: &str, z1: &[f64], z2: &[f64]) -> VariableSummary {
    let pooled: Vec<f64> = z1.iter().chain(z2).copied().collect();
    VariableSummary {
        name: name.to_string(),
        pooled_mean: stats::mean(&pooled),
        pooled_sd: stats::sample_sd(&pooled),
        within_pct: within_percent(z1, z2),
        period1_mean: stats::mean(z1),
        period1_sd: stats::sample_sd(z1),
        period2_mean: stats::mean(z2),
        period2_sd: stats::sample_sd(z2),
    }
}

const MAX_BINS: usize = 10_000;

/// Histogram of changes; exact zeros get their own bin.
pub fn change_histogram(delta: &[f64]) -> ChangeHistogram {
    let zero_count = delta.iter().filter(|&&d| d == 0.0).count();
    let nonzero: Vec<f64> = stats::sorted(
        &delta.iter().copied().filter(|&d| d != 0.0).collect::<Vec<_>>(),
    );
    if nonzero.is_empty() {
        return ChangeHistogram {
            zero_count,
            edges: Vec::new(),
            counts: Vec::new(),
        };
    }
    let m = nonzero.len();
    let lo = nonzero[0];
    let hi = nonzero[m - 1];
    let range = hi - lo;
    if range <= 0.0 {
        return ChangeHistogram {
            zero_count,
            edges: vec![lo, hi],
            counts: vec![m],
        };
    }
    let iqr = stats::quantile_sorted(&nonzero, 0.75) - stats::quantile_sorted(&nonzero, 0.25);
    let mut width = 2.0 * iqr / (m as f64).cbrt();
    if width.is_nan() || width <= 0.0 {
        // Sturges fallback when the interquartile range is zero.
        width = range / ((m as f64).log2().ceil() + 1.0);
    }
    let bins = ((range / width).ceil() as usize).clamp(1, MAX_BINS);
    let width = range / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
    edges[bins] = hi;
    let mut counts = vec![0usize; bins];
    for &v in &nonzero {
        let k = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    ChangeHistogram {
        zero_count,
        edges,
        counts,
    }
}

/// Descriptive statistics for `x` and `y` plus the histogram of `x2 - x1`.
pub fn summarize<T: Real>(data: &PanelDataset<T>) -> Result<SummaryReport, PanelError> {
    data.validate()?;
    let f = |v: &[T]| v.iter().map(|z| z.as_f64()).collect::<Vec<f64>>();
    let (x1, x2, y1, y2) = (f(&data.x1), f(&data.x2), f(&data.y1), f(&data.y2));
    let delta: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| b - a).collect();
    Ok(SummaryReport {
        n: data.n(),
        variables: vec![
            summarize_variable("x", &x1, &x2),
            summarize_variable("y", &y1, &y2),
        ],
        delta_x_histogram: change_histogram(&delta),
    })
}
