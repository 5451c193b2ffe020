//! Counting-process survival data: records, CSV I/O, standardization and
//! the risk-set index.
//!
//! Each row covers an interval `(t_start, t_stop]` of one subject with a
//! constant covariate vector. Time-fixed data is the special case of one
//! row per subject starting at zero.

use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};

/// One `(t_start, t_stop]` interval of a subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvRecord {
    pub subject_id: String,
    pub t_start: f64,
    pub t_stop: f64,
    /// Event indicator at `t_stop`.
    pub status: bool,
    pub covariates: Vec<f64>,
}

/// Validated collection of counting-process rows sharing one covariate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<SurvRecord>,
    column_names: Vec<String>,
    n_subjects: usize,
}

impl Dataset {
    /// Build a dataset, checking every row and per-subject interval layout.
    ///
    /// Rows are numbered from 1 in error messages.
    pub fn new(records: Vec<SurvRecord>, column_names: Vec<String>) -> Result<Self> {
        let p = column_names.len();
        for (i, r) in records.iter().enumerate() {
            check_record(r, p).map_err(|msg| CoxError::InvalidRow { row: i + 1, msg })?;
        }

        // intervals of one subject must not overlap
        let mut by_subject: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            by_subject.entry(r.subject_id.as_str()).or_default().push(i);
        }
        for rows in by_subject.values() {
            if rows.len() < 2 {
                continue;
            }
            let mut sorted = rows.clone();
            sorted.sort_by(|&a, &b| records[a].t_start.total_cmp(&records[b].t_start));
            for w in sorted.windows(2) {
                let (a, b) = (&records[w[0]], &records[w[1]]);
                if b.t_start < a.t_stop {
                    return Err(CoxError::InvalidRow {
                        row: w[1] + 1,
                        msg: format!(
                            "interval ({}, {}] of subject `{}` overlaps ({}, {}]",
                            b.t_start, b.t_stop, b.subject_id, a.t_start, a.t_stop
                        ),
                    });
                }
            }
        }

        let n_subjects = by_subject.len();
        Ok(Self {
            records,
            column_names,
            n_subjects,
        })
    }

    pub fn records(&self) -> &[SurvRecord] {
        &self.records
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n_rows(&self) -> usize {
        self.records.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_covariates(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.status).count()
    }

    /// Covariates as an `n_rows x p` matrix.
    pub fn design_matrix(&self) -> Array2<f64> {
        let p = self.n_covariates();
        Array2::from_shape_fn((self.n_rows(), p), |(i, j)| self.records[i].covariates[j])
    }

    /// Distinct subject ids in order of first appearance.
    pub fn subject_ids(&self) -> Vec<&str> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.subject_id.as_str(), ()).is_none() {
                out.push(r.subject_id.as_str());
            }
        }
        out
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let records: Vec<_> = rows.iter().map(|&i| self.records[i].clone()).collect();
        let n_subjects = records
            .iter()
            .map(|r| r.subject_id.as_str())
            .collect::<std::collections::HashSet<_>>()
            .len();
        Dataset {
            records,
            column_names: self.column_names.clone(),
            n_subjects,
        }
    }
}

fn check_record(r: &SurvRecord, p: usize) -> std::result::Result<(), String> {
    if r.covariates.len() != p {
        return Err(format!("expected {} covariates, found {}", p, r.covariates.len()));
    }
    if !r.t_start.is_finite() || !r.t_stop.is_finite() {
        return Err("non-finite time".into());
    }
    if r.t_start >= r.t_stop {
        return Err(format!(
            "t_start ({}) must be strictly less than t_stop ({})",
            r.t_start, r.t_stop
        ));
    }
    if let Some(j) = r.covariates.iter().position(|v| !v.is_finite()) {
        return Err(format!("covariate {} is not finite", j + 1));
    }
    Ok(())
}

/// Names of the columns holding the survival outcome.
///
/// `id` and `start` are optional: when the named column is absent from the
/// header, subject ids are synthesized from the row number and start times
/// default to zero.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub id: String,
    pub start: String,
    pub stop: String,
    pub status: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            start: "tstart".into(),
            stop: "tstop".into(),
            status: "status".into(),
        }
    }
}

/// Parse a header-bearing CSV into a validated [`Dataset`]. Every column not
/// claimed by the schema becomes a covariate, in header order.
pub fn parse_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| header.iter().position(|h| h == name);

    let stop_col = find(&schema.stop).ok_or_else(|| CoxError::MissingColumn(schema.stop.clone()))?;
    let status_col =
        find(&schema.status).ok_or_else(|| CoxError::MissingColumn(schema.status.clone()))?;
    let id_col = find(&schema.id);
    let start_col = find(&schema.start);

    let reserved = [Some(stop_col), Some(status_col), id_col, start_col];
    let cov_cols: Vec<usize> = (0..header.len())
        .filter(|c| !reserved.contains(&Some(*c)))
        .collect();
    let column_names = cov_cols.iter().map(|&c| header[c].clone()).collect();

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let cell = |c: usize| row.get(c).unwrap_or("");
        let number = |c: usize| -> Result<f64> {
            let s = cell(c);
            s.parse::<f64>().map_err(|_| CoxError::InvalidRow {
                row: row_no,
                msg: format!("column `{}`: `{}` is not numeric", header[c], s),
            })
        };

        let t_stop = number(stop_col)?;
        let t_start = match start_col {
            Some(c) => number(c)?,
            None => 0.0,
        };
        let status = match number(status_col)? {
            0.0 => false,
            1.0 => true,
            s => {
                return Err(CoxError::InvalidRow {
                    row: row_no,
                    msg: format!("status must be 0 or 1, found {s}"),
                })
            }
        };
        let subject_id = match id_col {
            Some(c) => cell(c).to_string(),
            None => row_no.to_string(),
        };
        let covariates = cov_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
        records.push(SurvRecord {
            subject_id,
            t_start,
            t_stop,
            status,
            covariates,
        });
    }
    Dataset::new(records, column_names)
}

/// Write a dataset in the layout read by [`parse_csv`] with the default
/// schema. Floats use the shortest representation that round-trips exactly.
pub fn write_csv<W: Write>(d: &Dataset, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["id".to_string(), "tstart".into(), "tstop".into(), "status".into()];
    header.extend(d.column_names.iter().cloned());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for r in &d.records {
        row.clear();
        row.push(r.subject_id.clone());
        row.push(fmt_f64(r.t_start));
        row.push(fmt_f64(r.t_stop));
        row.push(if r.status { "1" } else { "0" }.to_string());
        row.extend(r.covariates.iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Column centering and scaling recorded by [`standardize`].
///
/// `means` and `sds` cover every original column; columns listed in
/// `dropped` had zero variance and are excluded from fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub dropped: Vec<usize>,
}

impl ScalingInfo {
    /// No-op scaling for `p` columns.
    pub fn identity(p: usize) -> Self {
        Self {
            means: vec![0.0; p],
            sds: vec![1.0; p],
            dropped: Vec::new(),
        }
    }

    pub fn n_original(&self) -> usize {
        self.means.len()
    }

    /// Consistency check for scalings read back from storage.
    pub fn validate(&self) -> Result<()> {
        let p = self.means.len();
        if self.sds.len() != p {
            return Err(CoxError::DimensionMismatch { expected: p, got: self.sds.len() });
        }
        if self.means.iter().chain(&self.sds).any(|v| !v.is_finite()) || self.sds.iter().any(|&s| s <= 0.0) {
            return Err(CoxError::InvalidData("scaling needs finite means and positive sds".into()));
        }
        if self.dropped.iter().any(|&j| j >= p) || self.dropped.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoxError::InvalidData("dropped columns must be sorted indices below p".into()));
        }
        Ok(())
    }

    /// Indices of the columns kept for fitting.
    pub fn retained(&self) -> Vec<usize> {
        (0..self.means.len())
            .filter(|j| !self.dropped.contains(j))
            .collect()
    }

    /// Standardize one raw covariate vector, keeping retained columns only.
    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        self.retained()
            .into_iter()
            .map(|j| (x[j] - self.means[j]) / self.sds[j])
            .collect()
    }

    /// Inverse of [`transform_row`](Self::transform_row); dropped columns are
    /// restored to their (constant) mean.
    pub fn inverse_row(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.means.clone();
        for (k, j) in self.retained().into_iter().enumerate() {
            out[j] = z[k] * self.sds[j] + self.means[j];
        }
        out
    }

    /// Standardize another dataset with these statistics (e.g. new data at
    /// prediction time).
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.n_covariates() != self.n_original() {
            return Err(CoxError::DimensionMismatch {
                expected: self.n_original(),
                got: d.n_covariates(),
            });
        }
        let retained = self.retained();
        let records = d
            .records
            .iter()
            .map(|r| SurvRecord {
                covariates: self.transform_row(&r.covariates),
                ..r.clone()
            })
            .collect();
        Ok(Dataset {
            records,
            column_names: retained.iter().map(|&j| d.column_names[j].clone()).collect(),
            n_subjects: d.n_subjects,
        })
    }
}

/// Center each covariate to mean 0 and scale to standard deviation 1, using
/// the population denominator `n_rows`. Zero-variance columns are dropped.
pub fn standardize(d: &Dataset) -> (Dataset, ScalingInfo) {
    let n = d.n_rows().max(1) as f64;
    let p = d.n_covariates();
    let mut means = vec![0.0; p];
    let mut sds = vec![0.0; p];
    let mut dropped = Vec::new();
    for j in 0..p {
        let mean = d.records.iter().map(|r| r.covariates[j]).sum::<f64>() / n;
        let var = d
            .records
            .iter()
            .map(|r| (r.covariates[j] - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        means[j] = mean;
        if sd <= 1e-12 * mean.abs().max(1.0) {
            sds[j] = 1.0;
            dropped.push(j);
        } else {
            sds[j] = sd;
        }
    }
    let info = ScalingInfo { means, sds, dropped };
    let out = info.apply(d).expect("column count matches by construction");
    (out, info)
}

/// Map coefficients fitted on standardized covariates back to the original
/// scale. Dropped columns get a zero coefficient.
pub fn unstandardize_coefs(beta_std: &[f64], s: &ScalingInfo) -> Result<Vec<f64>> {
    let retained = s.retained();
    if beta_std.len() != retained.len() {
        return Err(CoxError::DimensionMismatch {
            expected: retained.len(),
            got: beta_std.len(),
        });
    }
    let mut out = vec![0.0; s.n_original()];
    for (k, j) in retained.into_iter().enumerate() {
        out[j] = beta_std[k] / s.sds[j];
    }
    Ok(out)
}

/// Distinct event times with their death sets and risk sets.
///
/// Row `j` is at risk at event time `t_i` when `t_start_j < t_i <= t_stop_j`.
/// Risk sets are stored contiguously; row indices within each set ascend.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskIndex {
    pub event_times: Vec<f64>,
    pub death_sets: Vec<Vec<usize>>,
    pub tie_counts: Vec<usize>,
    risk_offsets: Vec<usize>,
    risk_rows: Vec<usize>,
    n_rows: usize,
}

impl RiskIndex {
    /// Index rows described by their interval ends and event indicators.
    pub fn from_intervals(t_start: &[f64], t_stop: &[f64], status: &[bool]) -> Result<Self> {
        let n = t_stop.len();
        let mut event_times: Vec<f64> = (0..n).filter(|&j| status[j]).map(|j| t_stop[j]).collect();
        if event_times.is_empty() {
            return Err(CoxError::NoEvents);
        }
        event_times.sort_by(f64::total_cmp);
        event_times.dedup();
        let k = event_times.len();

        let mut death_sets = vec![Vec::new(); k];
        for j in (0..n).filter(|&j| status[j]) {
            let i = event_times.partition_point(|&t| t < t_stop[j]);
            death_sets[i].push(j);
        }
        let tie_counts = death_sets.iter().map(Vec::len).collect();

        // event-time window of each row: first index with t > start .. last with t <= stop
        let windows: Vec<(usize, usize)> = (0..n)
            .map(|j| {
                let lo = event_times.partition_point(|&t| t <= t_start[j]);
                let hi = event_times.partition_point(|&t| t <= t_stop[j]);
                (lo, hi.max(lo))
            })
            .collect();
        let mut sizes = vec![0usize; k];
        for &(lo, hi) in &windows {
            for s in &mut sizes[lo..hi] {
                *s += 1;
            }
        }
        let mut risk_offsets = Vec::with_capacity(k + 1);
        risk_offsets.push(0);
        for s in &sizes {
            risk_offsets.push(risk_offsets.last().unwrap() + s);
        }
        let mut fill = risk_offsets[..k].to_vec();
        let mut risk_rows = vec![0usize; *risk_offsets.last().unwrap()];
        for (j, &(lo, hi)) in windows.iter().enumerate() {
            for i in lo..hi {
                risk_rows[fill[i]] = j;
                fill[i] += 1;
            }
        }

        Ok(Self {
            event_times,
            death_sets,
            tie_counts,
            risk_offsets,
            risk_rows,
            n_rows: n,
        })
    }

    pub fn n_event_times(&self) -> usize {
        self.event_times.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Rows at risk at the `i`-th event time.
    pub fn risk_set(&self, i: usize) -> &[usize] {
        &self.risk_rows[self.risk_offsets[i]..self.risk_offsets[i + 1]]
    }

    pub fn risk_set_size(&self, i: usize) -> usize {
        self.risk_offsets[i + 1] - self.risk_offsets[i]
    }
}

/// Build the risk index of a dataset.
pub fn build_risk_index(d: &Dataset) -> Result<RiskIndex> {
    let start: Vec<f64> = d.records.iter().map(|r| r.t_start).collect();
    let stop: Vec<f64> = d.records.iter().map(|r| r.t_stop).collect();
    let status: Vec<bool> = d.records.iter().map(|r| r.status).collect();
    RiskIndex::from_intervals(&start, &stop, &status)
}
