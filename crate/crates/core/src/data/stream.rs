use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::{read_spec, VariableSpec};
use crate::error::{Error, Result};

/// Observations recorded on one day; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayBatch {
    pub day: i64,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl DayBatch {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Day-ordered batches with their variable metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStream {
    pub variables: Vec<VariableSpec>,
    pub days: Vec<DayBatch>,
}

impl DataStream {
    /// Builds a stream, validating every value against its variable.
    pub fn new(variables: Vec<VariableSpec>, days: Vec<DayBatch>) -> Result<Self> {
        for v in &variables {
            v.validate()?;
        }
        let mut row_no = 0;
        for w in days.windows(2) {
            if w[1].day <= w[0].day {
                return Err(Error::NonMonotoneDays {
                    prev: w[0].day,
                    next: w[1].day,
                });
            }
        }
        for batch in &days {
            if batch.rows.is_empty() {
                return Err(Error::Invalid(format!("day {} has no observations", batch.day)));
            }
            for row in &batch.rows {
                row_no += 1;
                if row.len() != variables.len() {
                    return Err(Error::Invalid(format!(
                        "row {row_no} has {} values, expected {}",
                        row.len(),
                        variables.len()
                    )));
                }
                for (v, x) in variables.iter().zip(row) {
                    if let Some(x) = x {
                        v.check_value(*x).map_err(|reason| Error::InvalidValue {
                            row: row_no,
                            name: v.name.clone(),
                            reason,
                        })?;
                    }
                }
            }
        }
        Ok(Self { variables, days })
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_rows(&self) -> usize {
        self.days.iter().map(|d| d.rows.len()).sum()
    }

    pub fn rows_per_day(&self) -> Vec<usize> {
        self.days.iter().map(|d| d.rows.len()).collect()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.days.iter().flat_map(move |d| d.rows.iter().map(move |r| r[j]))
    }

    /// Per-day mean of the observed values of each variable (`None` if all missing).
    pub fn daily_means(&self) -> Vec<Vec<Option<f64>>> {
        self.days
            .iter()
            .map(|d| {
                (0..self.n_vars())
                    .map(|j| {
                        let (s, n) = d
                            .rows
                            .iter()
                            .filter_map(|r| r[j])
                            .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
                        (n > 0).then(|| s / n as f64)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Reads a CSV stream with a `day` column and a TOML variable spec.
pub fn ingest(stream_file: &Path, spec_file: &Path) -> Result<DataStream> {
    let spec = read_spec(spec_file)?;
    let mut rdr = csv::Reader::from_path(stream_file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(stream_file, io),
        other => Error::Invalid(format!("{other:?}")),
    })?;
    let headers = rdr.headers()?.clone();
    let by_name: HashMap<&str, usize> = spec.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
    let mut day_col = None;
    let mut col_to_var = Vec::with_capacity(headers.len());
    for (c, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h == "day" {
            day_col = Some(c);
            col_to_var.push(None);
        } else {
            let j = *by_name.get(h).ok_or_else(|| Error::UnknownColumn(h.to_string()))?;
            col_to_var.push(Some(j));
        }
    }
    let day_col = day_col.ok_or(Error::MissingDayColumn)?;
    for v in &spec {
        if !col_to_var.contains(&by_name.get(v.name.as_str()).copied()) {
            return Err(Error::SpecFormat(format!("variable `{}` has no column", v.name)));
        }
    }
    let mut days: Vec<DayBatch> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row_no = r + 1;
        let day: i64 = rec
            .get(day_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::InvalidValue {
                row: row_no,
                name: "day".into(),
                reason: "day must be an integer".into(),
            })?;
        let mut row = vec![None; spec.len()];
        for (c, field) in rec.iter().enumerate() {
            let Some(j) = col_to_var[c] else { continue };
            let f = field.trim();
            if f.is_empty() || f.eq_ignore_ascii_case("na") {
                continue;
            }
            let x: f64 = f.parse().map_err(|_| Error::InvalidValue {
                row: row_no,
                name: spec[j].name.clone(),
                reason: format!("not a number: `{f}`"),
            })?;
            spec[j].check_value(x).map_err(|reason| Error::InvalidValue {
                row: row_no,
                name: spec[j].name.clone(),
                reason,
            })?;
            row[j] = Some(x);
        }
        match days.last_mut() {
            Some(b) if b.day == day => b.rows.push(row),
            Some(b) if b.day > day => {
                return Err(Error::NonMonotoneDays { prev: b.day, next: day });
            }
            _ => days.push(DayBatch { day, rows: vec![row] }),
        }
    }
    DataStream::new(spec, days)
}

/// Writes the stream as CSV with a leading `day` column; missing cells are empty.
pub fn write_stream_csv(path: &Path, ds: &DataStream) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Invalid(format!("{other:?}")),
    })?;
    let mut header = vec!["day".to_string()];
    header.extend(ds.variables.iter().map(|v| v.name.clone()));
    w.write_record(&header)?;
    for d in &ds.days {
        for row in &d.rows {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(d.day.to_string());
            rec.extend(row.iter().map(|x| x.map(|v| format!("{v}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
