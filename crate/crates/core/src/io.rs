//! Loading, aligning and validating observable panels and proxy series.
//!
//! Files are comma-separated with a header row. The date column is the first
//! column unless named explicitly. Empty cells, `NaN` and `NA` mark missing
//! values; observables must be complete, proxies may have gaps.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Minimum number of non-missing proxy observations overlapping the panel.
pub const MIN_PROXY_OVERLAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DateKind {
    Index,
    Year,
    Quarter,
    Month,
    Day,
}

/// An opaque, ordered calendar key. Only ordering and equality are used; no
/// frequency arithmetic is performed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DateKey {
    label: String,
    kind: DateKind,
    ordinal: i64,
}

impl DateKey {
    pub fn parse(raw: &str) -> Option<DateKey> {
        let s = raw.trim();
        let (kind, ordinal) = parse_date(s)?;
        Some(DateKey {
            label: s.to_string(),
            kind,
            ordinal,
        })
    }

    /// Plain integer index key (used by the synthetic generator).
    pub fn index(i: i64) -> DateKey {
        DateKey {
            label: i.to_string(),
            kind: DateKind::Index,
            ordinal: i,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> DateKind {
        self.kind
    }

    /// Plain integers and years share one ordinal scale.
    fn class(&self) -> DateKind {
        match self.kind {
            DateKind::Year => DateKind::Index,
            k => k,
        }
    }
}

impl PartialEq for DateKey {
    fn eq(&self, other: &Self) -> bool {
        self.class() == other.class() && self.ordinal == other.ordinal
    }
}

impl Eq for DateKey {}

impl std::hash::Hash for DateKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.class().hash(state);
        self.ordinal.hash(state);
    }
}

impl PartialOrd for DateKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DateKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.class(), self.ordinal).cmp(&(other.class(), other.ordinal))
    }
}

impl fmt::Display for DateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

fn parse_date(s: &str) -> Option<(DateKind, i64)> {
    if s.is_empty() {
        return None;
    }
    if let Ok(i) = s.parse::<i64>() {
        // four-digit positive integers read as years; they still order as integers
        let kind = if s.len() == 4 && !s.starts_with(['-', '+']) {
            DateKind::Year
        } else {
            DateKind::Index
        };
        return Some((kind, i));
    }
    // YYYYQn, YYYY-Qn, YYYY:Qn
    let upper = s.to_ascii_uppercase();
    if let Some(pos) = upper.find('Q') {
        let year: i64 = upper[..pos].trim_end_matches(['-', ':', ' ']).parse().ok()?;
        let q: i64 = upper[pos + 1..].parse().ok()?;
        if !(1..=4).contains(&q) {
            return None;
        }
        return Some((DateKind::Quarter, year * 4 + q - 1));
    }
    let parts: Vec<&str> = s.split(['-', '/']).collect();
    match parts.as_slice() {
        [y, m] => {
            let year: i64 = y.parse().ok()?;
            let month: i64 = m.parse().ok()?;
            if y.len() != 4 || !(1..=12).contains(&month) {
                return None;
            }
            Some((DateKind::Month, year * 12 + month - 1))
        }
        [y, m, d] => {
            let year: i64 = y.parse().ok()?;
            let month: i64 = m.parse().ok()?;
            let day: i64 = d.parse().ok()?;
            if y.len() != 4 || !(1..=12).contains(&month) {
                return None;
            }
            if day < 1 || day > days_in_month(year, month) {
                return None;
            }
            Some((DateKind::Day, days_from_civil(year, month, day)))
        }
        _ => None,
    }
}

fn days_in_month(y: i64, m: i64) -> i64 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        _ => {
            if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 {
                29
            } else {
                28
            }
        }
    }
}

// Howard Hinnant's days-from-civil.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

pub(crate) fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("nan") || c.eq_ignore_ascii_case("na")
}

/// Panel of observables: `T` dated rows by `n` named columns.
#[derive(Debug, Clone)]
pub struct Panel {
    dates: Vec<DateKey>,
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl Panel {
    /// Builds a panel, sorting rows by date. Fails on duplicate dates,
    /// non-finite values or shape mismatches.
    pub fn new(dates: Vec<DateKey>, values: DMatrix<f64>, names: Vec<String>) -> Result<Panel> {
        if values.nrows() != dates.len() {
            return invalid(format!(
                "panel has {} dates but {} rows",
                dates.len(),
                values.nrows()
            ));
        }
        if values.ncols() != names.len() {
            return invalid(format!(
                "panel has {} names but {} columns",
                names.len(),
                values.ncols()
            ));
        }
        if names.is_empty() {
            return invalid("panel needs at least one observable");
        }
        for r in 0..values.nrows() {
            for c in 0..values.ncols() {
                if !values[(r, c)].is_finite() {
                    return Err(Error::MissingObservable {
                        row: r,
                        column: names[c].clone(),
                    });
                }
            }
        }
        let mut order: Vec<usize> = (0..dates.len()).collect();
        order.sort_by(|&a, &b| dates[a].cmp(&dates[b]));
        let sorted_dates: Vec<DateKey> = order.iter().map(|&i| dates[i].clone()).collect();
        for w in sorted_dates.windows(2) {
            if w[0] >= w[1] {
                return invalid(format!("duplicate or mixed-format date '{}'", w[1]));
            }
        }
        let sorted = DMatrix::from_fn(values.nrows(), values.ncols(), |r, c| values[(order[r], c)]);
        Ok(Panel {
            dates: sorted_dates,
            values: sorted,
            names,
        })
    }

    pub fn dates(&self) -> &[DateKey] {
        &self.dates
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn t(&self) -> usize {
        self.values.nrows()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// How missing proxy values enter the moment estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Demean the observed entries, then fill gaps with zero.
    #[default]
    Zero,
    /// Keep gaps; the moment estimator skips them.
    DropReport,
}

impl std::str::FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(MissingPolicy::Zero),
            "drop-report" | "drop_report" => Ok(MissingPolicy::DropReport),
            other => invalid(format!("unknown missing policy '{other}'")),
        }
    }
}

/// A proxy series with explicit missing markers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxySeries {
    pub label: String,
    pub dates: Vec<DateKey>,
    pub values: Vec<Option<f64>>,
}

impl ProxySeries {
    pub fn new(label: impl Into<String>, dates: Vec<DateKey>, values: Vec<Option<f64>>) -> Result<ProxySeries> {
        if dates.len() != values.len() {
            return invalid("proxy dates and values differ in length");
        }
        Ok(ProxySeries {
            label: label.into(),
            dates,
            values: values
                .into_iter()
                .map(|v| v.filter(|x| x.is_finite()))
                .collect(),
        })
    }

    /// Fully observed series on the given dates.
    pub fn from_values(label: impl Into<String>, dates: Vec<DateKey>, values: &[f64]) -> Result<ProxySeries> {
        ProxySeries::new(label, dates, values.iter().map(|&v| Some(v)).collect())
    }

    /// Re-indexes the series onto `dates`; slots without an observation are missing.
    pub fn align(&self, dates: &[DateKey]) -> ProxySeries {
        let lookup: HashMap<&DateKey, Option<f64>> =
            self.dates.iter().zip(self.values.iter().copied()).collect();
        let values = dates
            .iter()
            .map(|d| lookup.get(d).copied().flatten())
            .collect();
        ProxySeries {
            label: self.label.clone(),
            dates: dates.to_vec(),
            values,
        }
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn missing_dates(&self) -> Vec<&DateKey> {
        self.dates
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_none())
            .map(|(d, _)| d)
            .collect()
    }

    /// Demeaned values under `policy`: the mean of the observed entries is
    /// removed; gaps become 0 under `Zero` and stay `None` under `DropReport`.
    pub fn prepared(&self, policy: MissingPolicy) -> Vec<Option<f64>> {
        let observed: Vec<f64> = self.values.iter().flatten().copied().collect();
        let mean = if observed.is_empty() {
            0.0
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
        self.values
            .iter()
            .map(|v| match (v, policy) {
                (Some(x), _) => Some(x - mean),
                (None, MissingPolicy::Zero) => Some(0.0),
                (None, MissingPolicy::DropReport) => None,
            })
            .collect()
    }
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: display.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => Error::Csv {
                path: display.clone(),
                message: e.to_string(),
            },
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: display.clone(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(|e| Error::Csv {
            path: display.clone(),
            message: e.to_string(),
        })?);
    }
    Ok((headers, rows))
}

fn date_position(headers: &[String], date_column: Option<&str>, path: &Path) -> Result<usize> {
    match date_column {
        None => Ok(0),
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| Error::Csv {
            path: path.display().to_string(),
            message: format!("date column '{name}' not found"),
        }),
    }
}

/// Loads an observable panel. Columns keep file order minus the date column;
/// rows are sorted by date.
pub fn load_panel(path: impl AsRef<Path>, date_column: Option<&str>) -> Result<Panel> {
    let path = path.as_ref();
    let (headers, rows) = read_records(path)?;
    let date_pos = date_position(&headers, date_column, path)?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_pos)
        .map(|(_, h)| h.clone())
        .collect();
    if names.len() < 2 {
        return invalid(format!(
            "{}: panel needs at least two observables",
            path.display()
        ));
    }
    let mut dates = Vec::with_capacity(rows.len());
    let mut data = Vec::with_capacity(rows.len() * names.len());
    for (r, rec) in rows.iter().enumerate() {
        if rec.len() != headers.len() {
            return Err(Error::Csv {
                path: path.display().to_string(),
                message: format!("row {r} has {} fields, expected {}", rec.len(), headers.len()),
            });
        }
        let raw_date = &rec[date_pos];
        dates.push(DateKey::parse(raw_date).ok_or_else(|| Error::BadDate {
            value: raw_date.to_string(),
            row: r,
        })?);
        for (c, cell) in rec.iter().enumerate() {
            if c == date_pos {
                continue;
            }
            let column = headers[c].clone();
            if is_missing(cell) {
                return Err(Error::MissingObservable { row: r, column });
            }
            let v: f64 = cell.parse().map_err(|_| Error::BadValue {
                value: cell.to_string(),
                row: r,
                column: column.clone(),
            })?;
            if !v.is_finite() {
                return Err(Error::MissingObservable { row: r, column });
            }
            data.push(v);
        }
    }
    let values = DMatrix::from_row_slice(rows.len(), names.len(), &data);
    Panel::new(dates, values, names)
}

/// Reads a single proxy file: a date column plus one value column whose
/// header becomes the label.
pub fn read_proxy(path: impl AsRef<Path>, date_column: Option<&str>) -> Result<ProxySeries> {
    let path = path.as_ref();
    let (headers, rows) = read_records(path)?;
    let date_pos = date_position(&headers, date_column, path)?;
    if headers.len() != 2 {
        return Err(Error::Csv {
            path: path.display().to_string(),
            message: format!("proxy file needs a date and one value column, found {} columns", headers.len()),
        });
    }
    let value_pos = 1 - date_pos;
    let label = headers[value_pos].clone();
    let mut dates = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (r, rec) in rows.iter().enumerate() {
        let raw_date = &rec[date_pos];
        dates.push(DateKey::parse(raw_date).ok_or_else(|| Error::BadDate {
            value: raw_date.to_string(),
            row: r,
        })?);
        let cell = &rec[value_pos];
        if is_missing(cell) {
            values.push(None);
        } else {
            let v: f64 = cell.parse().map_err(|_| Error::BadValue {
                value: cell.to_string(),
                row: r,
                column: label.clone(),
            })?;
            values.push(Some(v).filter(|x| x.is_finite()));
        }
    }
    ProxySeries::new(label, dates, values)
}

/// Loads and aligns proxies to the panel dates. Each proxy needs at least
/// [`MIN_PROXY_OVERLAP`] observed dates inside the panel.
pub fn load_proxies<P: AsRef<Path>>(
    paths: &[P],
    panel: &Panel,
    policy: MissingPolicy,
    date_column: Option<&str>,
) -> Result<Vec<ProxySeries>> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let raw = read_proxy(p, date_column)?;
        out.push(align_proxy(&raw, panel, policy)?);
    }
    Ok(out)
}

/// Aligns one proxy to a panel and checks overlap.
pub fn align_proxy(raw: &ProxySeries, panel: &Panel, policy: MissingPolicy) -> Result<ProxySeries> {
    let aligned = raw.align(panel.dates());
    let count = aligned.observed_count();
    if count < MIN_PROXY_OVERLAP {
        return Err(Error::InsufficientOverlap {
            label: raw.label.clone(),
            count,
            required: MIN_PROXY_OVERLAP,
        });
    }
    if policy == MissingPolicy::DropReport {
        let missing = aligned.missing_dates();
        if !missing.is_empty() {
            log::warn!(
                "proxy '{}': {} of {} panel dates missing and skipped",
                aligned.label,
                missing.len(),
                aligned.dates.len()
            );
        }
    }
    Ok(aligned)
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let map = |e: csv::Error| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(header).map_err(map)?;
    for row in rows {
        w.write_record(&row).map_err(map)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Writes a panel so that [`load_panel`] reproduces it bit-exactly.
pub fn write_panel(path: impl AsRef<Path>, panel: &Panel) -> Result<()> {
    let mut header = vec!["date".to_string()];
    header.extend(panel.names.iter().cloned());
    let rows = (0..panel.t()).map(|r| {
        let mut row = vec![panel.dates[r].label().to_string()];
        row.extend((0..panel.n()).map(|c| format!("{:?}", panel.values[(r, c)])));
        row
    });
    write_csv(path.as_ref(), &header, rows)
}

/// Writes a proxy series; missing entries are written as `NA`.
pub fn write_proxy(path: impl AsRef<Path>, proxy: &ProxySeries) -> Result<()> {
    let header = vec!["date".to_string(), proxy.label.clone()];
    let rows = proxy.dates.iter().zip(&proxy.values).map(|(d, v)| {
        vec![
            d.label().to_string(),
            v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}")),
        ]
    });
    write_csv(path.as_ref(), &header, rows)
}
