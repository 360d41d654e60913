//! Time-series container and CSV ingestion.
//!
//! Market files are read into a [`TimeSeriesPath`] whose clock is the
//! business-day count scaled to BUS/252 year fractions: every observation is
//! one business day (0.004 years) after the previous one, whatever the
//! calendar gap between them.

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One business day in years under BUS/252 (rounded to the 0.004 convention).
pub const BUSINESS_DAY: f64 = 0.004;

#[derive(Debug, Error)]
pub enum TimeSeriesError {
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("need at least 2 valid observations, got {0}")]
    InsufficientData(usize),
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("times must be strictly increasing (violated at index {0})")]
    NonIncreasing(usize),
    #[error("{times} times but {values} values")]
    LengthMismatch { times: usize, values: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("value {value} at index {index} is not strictly positive")]
    NonPositive { index: usize, value: f64 },
    #[error("window [{start}, {start}+{len}) exceeds path of {n} observations")]
    OutOfRange { start: usize, len: usize, n: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered `(time, value)` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeriesPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, TimeSeriesError> {
        if times.len() != values.len() {
            return Err(TimeSeriesError::LengthMismatch {
                times: times.len(),
                values: values.len(),
            });
        }
        if times.len() < 2 {
            return Err(TimeSeriesError::InsufficientData(times.len()));
        }
        for (i, (t, v)) in times.iter().zip(&values).enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(TimeSeriesError::NonFinite(i));
            }
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(TimeSeriesError::NonIncreasing(i + 1));
        }
        Ok(Self { times, values })
    }

    /// Values observed on the grid `0, dt, 2dt, ...`.
    pub fn uniform(dt: f64, values: Vec<f64>) -> Result<Self, TimeSeriesError> {
        let times = (0..values.len()).map(|i| i as f64 * dt).collect();
        Self::new(times, values)
    }

    /// Values observed once per business day starting at `t = 0`.
    pub fn business_daily(values: Vec<f64>) -> Result<Self, TimeSeriesError> {
        Self::uniform(BUSINESS_DAY, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Length of the observation interval, `t_last - t_first`.
    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Copy of `len` consecutive observations starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self, TimeSeriesError> {
        if start + len > self.len() {
            return Err(TimeSeriesError::OutOfRange {
                start,
                len,
                n: self.len(),
            });
        }
        Self::new(
            self.times[start..start + len].to_vec(),
            self.values[start..start + len].to_vec(),
        )
    }

    /// Applies `f` to every value, keeping the clock.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, TimeSeriesError> {
        Self::new(self.times.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Natural log of every value.
    pub fn log_transform(&self) -> Result<Self, TimeSeriesError> {
        if let Some((index, &value)) = self.values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(TimeSeriesError::NonPositive { index, value });
        }
        Ok(Self {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v.ln()).collect(),
        })
    }

    /// Writes the two-column `t,value` layout with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t:.16e},{v:.16e}")?;
        }
        Ok(())
    }

    /// Reads the layout produced by [`TimeSeriesPath::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self, TimeSeriesError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = reader.headers()?.clone();
        let t_col = column_index(&header, "t")?;
        let v_col = column_index(&header, "value")?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |col: usize| -> Result<f64, TimeSeriesError> {
                record
                    .get(col)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or(TimeSeriesError::NonFinite(times.len()))
            };
            let t = parse(t_col)?;
            let v = parse(v_col)?;
            times.push(t);
            values.push(v);
        }
        Self::new(times, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DateFormat {
    /// `YYYY-MM-DD`
    Date,
    /// `YYYY-MM-DD HH:MM:SS±HH:MM`; the local calendar date is kept.
    DateTimeOffset,
}

impl DateFormat {
    fn parse(self, raw: &str) -> Option<NaiveDate> {
        match self {
            DateFormat::Date => NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok(),
            DateFormat::DateTimeOffset => DateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%:z")
                .ok()
                .map(|dt| dt.naive_local().date()),
        }
    }
}

/// Column layout of a market CSV. Rows whose date or value fails to parse are
/// dropped and counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSpec {
    pub date_column: String,
    pub value_column: String,
    pub date_format: DateFormat,
}

impl IngestSpec {
    pub fn new(date_column: &str, value_column: &str, date_format: DateFormat) -> Self {
        Self {
            date_column: date_column.to_owned(),
            value_column: value_column.to_owned(),
            date_format,
        }
    }

    /// Yahoo daily quote download (`Date,Open,High,Low,Close,Adj Close,Volume`).
    pub fn yahoo(value_column: &str) -> Self {
        Self::new("Date", value_column, DateFormat::Date)
    }

    /// Plain `date,value` file.
    pub fn generic() -> Self {
        Self::new("date", "value", DateFormat::Date)
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub path: TimeSeriesPath,
    /// Calendar date of each retained observation, aligned with `path`.
    pub dates: Vec<NaiveDate>,
    pub dropped_rows: usize,
}

fn column_index(header: &csv::StringRecord, name: &str) -> Result<usize, TimeSeriesError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| TimeSeriesError::MissingColumn(name.to_owned()))
}

/// Parses a market CSV into a business-daily path starting at `t = 0`.
pub fn ingest_csv<R: Read>(input: R, spec: &IngestSpec) -> Result<Ingested, TimeSeriesError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let date_col = column_index(&header, &spec.date_column)?;
    let value_col = column_index(&header, &spec.value_column)?;

    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    let mut dropped_rows = 0;
    for record in reader.records() {
        let record = record?;
        let date = record.get(date_col).and_then(|s| spec.date_format.parse(s));
        let value = record
            .get(value_col)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite());
        match (date, value) {
            (Some(d), Some(v)) => rows.push((d, v)),
            _ => dropped_rows += 1,
        }
    }
    if rows.len() < 2 {
        return Err(TimeSeriesError::InsufficientData(rows.len()));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(TimeSeriesError::DuplicateDate(w[0].0));
    }

    let (dates, values): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(Ingested {
        path: TimeSeriesPath::business_daily(values)?,
        dates,
        dropped_rows,
    })
}
