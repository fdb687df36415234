use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime};

use super::DataError;

/// N named series over a shared, strictly increasing time index. Missing
/// cells hold 0.0 with a `false` mask bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub(crate) time_header: String,
    pub(crate) names: Vec<String>,
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) mask: Vec<Vec<bool>>,
    /// Numeric stamps: integers as written, dates as days, date-times as
    /// seconds.
    pub(crate) stamps: Vec<i64>,
    pub(crate) labels: Vec<String>,
}

impl TimeSeriesDataset {
    /// Builds a fully present dataset with integer stamps `0..L`.
    pub fn from_series(names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, DataError> {
        let len = values.first().map_or(0, Vec::len);
        let mask = values.iter().map(|v| vec![true; v.len()]).collect();
        let stamps: Vec<i64> = (0..len as i64).collect();
        let labels = stamps.iter().map(i64::to_string).collect();
        Self::new("t".into(), names, values, mask, stamps, labels)
    }

    pub fn new(
        time_header: String,
        names: Vec<String>,
        values: Vec<Vec<f64>>,
        mask: Vec<Vec<bool>>,
        stamps: Vec<i64>,
        labels: Vec<String>,
    ) -> Result<Self, DataError> {
        if names.len() < 2 {
            return Err(DataError::TooFewSeries(names.len()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(DataError::DuplicateName(n.clone()));
            }
        }
        let len = stamps.len();
        if values.len() != names.len()
            || mask.len() != names.len()
            || labels.len() != len
            || values.iter().any(|v| v.len() != len)
            || mask.iter().any(|m| m.len() != len)
        {
            return Err(DataError::Invalid("inconsistent dataset dimensions".into()));
        }
        if let Some(i) = (1..len).find(|&i| stamps[i] <= stamps[i - 1]) {
            return Err(DataError::NonMonotoneTime {
                line: i + 2,
                stamp: labels[i].clone(),
            });
        }
        for (v, m) in values.iter().zip(&mask) {
            if v.iter().zip(m).any(|(x, &present)| present && !x.is_finite()) {
                return Err(DataError::Invalid("non-finite present value".into()));
            }
        }
        Ok(TimeSeriesDataset {
            time_header,
            names,
            values,
            mask,
            stamps,
            labels,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_series(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn mask(&self, i: usize) -> &[bool] {
        &self.mask[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn stamps(&self) -> &[i64] {
        &self.stamps
    }

    pub fn time_labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|m| m.iter().all(|&p| p))
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().map(|m| m.iter().filter(|&&p| !p).count()).sum()
    }

    /// Keeps only the series whose index satisfies `keep`.
    pub(crate) fn retain_series(&self, keep: impl Fn(usize) -> bool) -> Result<Self, DataError> {
        let idx: Vec<usize> = (0..self.n_series()).filter(|&i| keep(i)).collect();
        if idx.is_empty() {
            return Err(DataError::AllSeriesDropped);
        }
        Self::new(
            self.time_header.clone(),
            idx.iter().map(|&i| self.names[i].clone()).collect(),
            idx.iter().map(|&i| self.values[i].clone()).collect(),
            idx.iter().map(|&i| self.mask[i].clone()).collect(),
            self.stamps.clone(),
            self.labels.clone(),
        )
    }

    /// Time steps `range` of every series.
    pub fn slice_time(&self, range: std::ops::Range<usize>) -> Result<Self, DataError> {
        if range.end > self.len() || range.is_empty() {
            return Err(DataError::Invalid(format!("time range {range:?} of {}", self.len())));
        }
        Self::new(
            self.time_header.clone(),
            self.names.clone(),
            self.values.iter().map(|v| v[range.clone()].to_vec()).collect(),
            self.mask.iter().map(|m| m[range.clone()].to_vec()).collect(),
            self.stamps[range.clone()].to_vec(),
            self.labels[range].to_vec(),
        )
    }
}

/// Layout of an input table.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub delimiter: u8,
    /// Cell contents (besides empty) treated as missing.
    pub missing_tokens: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            delimiter: b',',
            missing_tokens: vec!["NA".into(), "NaN".into(), "nan".into()],
        }
    }
}

fn parse_stamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(i64::from(d.num_days_from_ce()));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesDataset, DataError> {
    read_csv(File::open(path)?, schema)
}

/// Parses a wide table: first column time stamps, one column per series,
/// blank cells missing.
pub fn read_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<TimeSeriesDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.len() < 3 {
        return Err(DataError::Malformed {
            line: 1,
            msg: "expected a time column and at least two series".into(),
        });
    }
    let time_header = headers[0].trim().to_string();
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let n = names.len();
    let mut values = vec![Vec::new(); n];
    let mut mask = vec![Vec::new(); n];
    let mut stamps: Vec<i64> = Vec::new();
    let mut labels = Vec::new();

    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != n + 1 {
            return Err(DataError::Malformed {
                line,
                msg: format!("expected {} fields, found {}", n + 1, rec.len()),
            });
        }
        let label = rec[0].trim().to_string();
        let stamp = parse_stamp(&label).ok_or_else(|| DataError::Malformed {
            line,
            msg: format!("unparseable time stamp `{label}`"),
        })?;
        if let Some(&prev) = stamps.last() {
            if stamp == prev {
                return Err(DataError::DuplicateStamp { line, stamp: label });
            }
            if stamp < prev {
                return Err(DataError::NonMonotoneTime { line, stamp: label });
            }
        }
        for (i, cell) in rec.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() || schema.missing_tokens.iter().any(|t| t == cell) {
                values[i].push(0.0);
                mask[i].push(false);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DataError::Malformed {
                line,
                msg: format!("column `{}`: not a number: `{cell}`", names[i]),
            })?;
            if !v.is_finite() {
                return Err(DataError::Malformed {
                    line,
                    msg: format!("column `{}`: non-finite value", names[i]),
                });
            }
            values[i].push(v);
            mask[i].push(true);
        }
        stamps.push(stamp);
        labels.push(label);
    }
    if stamps.is_empty() {
        return Err(DataError::Malformed {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    TimeSeriesDataset::new(time_header, names, values, mask, stamps, labels)
}

/// Writes the dataset in the input layout. Values carry 17 significant
/// digits, so reading the file back reproduces them exactly.
pub fn write_csv<W: Write>(out: W, data: &TimeSeriesDataset) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![data.time_header.clone()];
    header.extend(data.names.iter().cloned());
    w.write_record(&header)?;
    for t in 0..data.len() {
        let mut row = Vec::with_capacity(data.n_series() + 1);
        row.push(data.labels[t].clone());
        for i in 0..data.n_series() {
            row.push(if data.mask[i][t] {
                format!("{:.16e}", data.values[i][t])
            } else {
                String::new()
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
