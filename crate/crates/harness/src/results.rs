//! Result rows and CSV emission.
//!
//! Trial file columns: `experiment,n,d,s,eps,delta,trial,metric,value`, one
//! row per `(cell, trial, metric)`. Summary file columns:
//! `experiment,n,d,s,eps,delta,metric,count,mean,median,q10,q90`. Numbers use
//! Rust's shortest round-trip formatting, so output does not depend on locale.

use std::io::Write;

use crate::error::{HarnessError, Result};
use crate::grid::{Cell, GRID_KEYS};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub cell: Cell,
    pub cell_index: usize,
    pub trial: usize,
    pub metric: &'static str,
    pub value: f64,
}

fn header(extra: &[&str]) -> Vec<String> {
    std::iter::once("experiment").chain(GRID_KEYS).chain(extra.iter().copied()).map(String::from).collect()
}

fn cell_fields(experiment: &str, c: &Cell) -> Vec<String> {
    let mut v = vec![experiment.to_string()];
    v.extend(c.values().iter().map(|x| x.to_string()));
    v
}

pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&["trial", "metric", "value"]))?;
    for r in rows {
        let mut f = cell_fields(r.experiment, &r.cell);
        f.extend([r.trial.to_string(), r.metric.to_string(), r.value.to_string()]);
        w.write_record(&f)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    Summary {
        count: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: quantile(&v, 0.5),
        q10: quantile(&v, 0.1),
        q90: quantile(&v, 0.9),
    }
}

/// Groups rows by `(cell, metric)` in first-seen order.
pub fn write_summary<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut groups: Vec<(&ResultRow, Vec<f64>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(g, _)| (g.cell_index, g.metric) == (r.cell_index, r.metric)) {
            Some((_, v)) => v.push(r.value),
            None => groups.push((r, vec![r.value])),
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&["metric", "count", "mean", "median", "q10", "q90"]))?;
    for (r, values) in groups {
        let s = summarize(&values);
        let mut f = cell_fields(r.experiment, &r.cell);
        f.push(r.metric.to_string());
        f.extend([s.count as f64, s.mean, s.median, s.q10, s.q90].iter().map(|x| x.to_string()));
        w.write_record(&f)?;
    }
    w.flush()?;
    Ok(())
}

/// A CSV file held as named string columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub records: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut records = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(HarnessError::Csv(format!(
                    "record has {} fields, header has {}",
                    rec.len(),
                    headers.len()
                )));
            }
            records.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, records })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| HarnessError::Csv(format!("no column `{name}`")))
    }

    /// Numeric `(x, y)` pairs, keeping rows where `filter` (column, value) matches.
    pub fn pairs(&self, x: &str, y: &str, filter: Option<(&str, &str)>) -> Result<Vec<(f64, f64)>> {
        let (xi, yi) = (self.column(x)?, self.column(y)?);
        let fi = filter.map(|(c, v)| self.column(c).map(|i| (i, v))).transpose()?;
        let num = |s: &str, col: &str| {
            s.parse::<f64>().map_err(|_| HarnessError::Csv(format!("`{s}` in column `{col}` is not a number")))
        };
        self.records
            .iter()
            .filter(|r| fi.is_none_or(|(i, v)| r[i] == v))
            .map(|r| Ok((num(&r[xi], x)?, num(&r[yi], y)?)))
            .collect()
    }
}
