//! Labeled bug-report data: raw text reports, dense feature matrices, and
//! the train/test pairing used by every experiment.
//!
//! Two CSV layouts are understood. Raw report files name an id column, one
//! or more text columns (concatenated with a space), and a label column.
//! Matrix files carry one numeric column per feature followed by the label
//! column (`label` unless configured otherwise).

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Security bug report.
pub const SBR: u8 = 1;
/// Non-security bug report.
pub const NSBR: u8 = 0;

pub const DEFAULT_LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BugReport {
    pub id: String,
    pub text: String,
    pub label: u8,
}

/// Dense row-major feature storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    n_cols: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn with_columns(n_cols: usize) -> Self {
        Features {
            n_cols,
            data: Vec::new(),
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Features {
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_flat(n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_cols == 0 && !data.is_empty() {
            return Err(Error::Shape {
                what: "values",
                expected: 0,
                found: data.len(),
            });
        }
        if n_cols > 0 && data.len() % n_cols != 0 {
            return Err(Error::Shape {
                what: "values (multiple of column count)",
                expected: (data.len() / n_cols + 1) * n_cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos / n_cols.max(1),
                column: None,
                message: "feature value is not finite".into(),
            });
        }
        Ok(Features { n_cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(n_cols: usize, rows: &[R]) -> Result<Self> {
        let mut out = Features::with_columns(n_cols);
        for r in rows {
            out.push_row(r.as_ref())?;
        }
        Ok(out)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_cols {
            return Err(Error::Shape {
                what: "columns",
                expected: self.n_cols,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: self.n_rows(),
                column: None,
                message: "feature value is not finite".into(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        if self.n_cols == 0 {
            0
        } else {
            self.data.len() / self.n_cols
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, rows: &[usize]) -> Features {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Features {
            n_cols: self.n_cols,
            data,
        }
    }
}

/// A feature matrix with one binary label per row and a name per column.
///
/// Values may be any finite reals; tf-idf matrices happen to be
/// non-negative but synthetic benchmark data need not be.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    features: Features,
    labels: Vec<u8>,
    column_names: Vec<String>,
}

impl LabeledMatrix {
    pub fn new(features: Features, labels: Vec<u8>, column_names: Vec<String>) -> Result<Self> {
        if labels.len() != features.n_rows() {
            return Err(Error::Shape {
                what: "labels",
                expected: features.n_rows(),
                found: labels.len(),
            });
        }
        if column_names.len() != features.n_cols() {
            return Err(Error::Shape {
                what: "column names",
                expected: features.n_cols(),
                found: column_names.len(),
            });
        }
        if let Some(row) = labels.iter().position(|&l| l > 1) {
            return Err(Error::Parse {
                row,
                column: None,
                message: format!("label {} is not 0 or 1", labels[row]),
            });
        }
        Ok(LabeledMatrix {
            features,
            labels,
            column_names,
        })
    }

    /// Matrix with generated column names `f0, f1, ...`.
    pub fn unnamed(features: Features, labels: Vec<u8>) -> Result<Self> {
        let names = (0..features.n_cols()).map(|j| format!("f{j}")).collect();
        LabeledMatrix::new(features, labels, names)
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let sbr = self.count(SBR);
        sbr > 0 && sbr < self.n_rows()
    }

    pub fn indices_of(&self, label: u8) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }

    /// Rows at `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> LabeledMatrix {
        LabeledMatrix {
            features: self.features.select(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            column_names: self.column_names.clone(),
        }
    }

    pub fn into_parts(self) -> (Features, Vec<u8>, Vec<String>) {
        (self.features, self.labels, self.column_names)
    }
}

/// Number of reports, number of SBRs, and the SBR share in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub n_total: usize,
    pub n_sbr: usize,
    pub sbr_pct: f64,
}

impl ClassSummary {
    /// Percentage rounded to one decimal, e.g. `"0.4"`.
    pub fn pct_display(&self) -> String {
        format!("{:.1}", self.sbr_pct)
    }
}

pub fn class_summary(m: &LabeledMatrix) -> ClassSummary {
    let n_total = m.n_rows();
    let n_sbr = m.count(SBR);
    let sbr_pct = if n_total == 0 {
        0.0
    } else {
        100.0 * n_sbr as f64 / n_total as f64
    };
    ClassSummary {
        n_total,
        n_sbr,
        sbr_pct,
    }
}

/// Training data (possibly filtered) with its untouched test partition.
#[derive(Debug, Clone)]
pub struct DatasetPair {
    pub train: LabeledMatrix,
    test: LabeledMatrix,
    pub project: String,
    pub filter_name: String,
}

impl DatasetPair {
    pub fn new(
        train: LabeledMatrix,
        test: LabeledMatrix,
        project: impl Into<String>,
        filter_name: impl Into<String>,
    ) -> Result<Self> {
        if train.column_names() != test.column_names() {
            return Err(Error::ColumnMismatch);
        }
        Ok(DatasetPair {
            train,
            test,
            project: project.into(),
            filter_name: filter_name.into(),
        })
    }

    pub fn test(&self) -> &LabeledMatrix {
        &self.test
    }

    /// Same test partition, different training data.
    pub fn with_train(&self, train: LabeledMatrix, filter_name: impl Into<String>) -> Result<Self> {
        DatasetPair::new(train, self.test.clone(), self.project.clone(), filter_name)
    }
}

/// How raw label strings map onto {SBR, NSBR}.
///
/// With an empty `negative` set every value outside `positive` is NSBR;
/// otherwise values in neither set are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap {
            positive: ["1".to_string()].into(),
            negative: ["0".to_string()].into(),
        }
    }
}

impl LabelMap {
    pub fn positive_only<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LabelMap {
            positive: values.into_iter().map(Into::into).collect(),
            negative: BTreeSet::new(),
        }
    }

    pub fn map(&self, raw: &str) -> Option<u8> {
        let v = raw.trim();
        if self.positive.contains(v) {
            Some(SBR)
        } else if self.negative.is_empty() || self.negative.contains(v) {
            Some(NSBR)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSchema {
    pub id: String,
    pub text: Vec<String>,
    pub label: String,
    #[serde(default)]
    pub labels: LabelMap,
}

impl Default for RawSchema {
    fn default() -> Self {
        RawSchema {
            id: "id".into(),
            text: vec!["summary".into(), "description".into()],
            label: "label".into(),
            labels: LabelMap::default(),
        }
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
}

fn record_error(row: usize, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { .. } | csv::ErrorKind::Utf8 { .. } => Error::Parse {
            row,
            column: None,
            message: e.to_string(),
        },
        _ => Error::Csv(e),
    }
}

pub fn load_raw_csv(path: impl AsRef<Path>, schema: &RawSchema) -> Result<Vec<BugReport>> {
    read_raw_csv(File::open(path)?, schema)
}

pub fn read_raw_csv<R: Read>(reader: R, schema: &RawSchema) -> Result<Vec<BugReport>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = header_index(&headers, &schema.id)?;
    let label_col = header_index(&headers, &schema.label)?;
    let text_cols = schema
        .text
        .iter()
        .map(|t| header_index(&headers, t))
        .collect::<Result<Vec<_>>>()?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| record_error(row, e))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let raw_label = field(label_col);
        let label = schema.labels.map(raw_label).ok_or_else(|| Error::Parse {
            row,
            column: Some(schema.label.clone()),
            message: format!("label {raw_label:?} is not binary under the label mapping"),
        })?;
        let id = field(id_col).to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Parse {
                row,
                column: Some(schema.id.clone()),
                message: format!("duplicate id {id:?}"),
            });
        }
        let text = text_cols
            .iter()
            .map(|&i| field(i))
            .collect::<Vec<_>>()
            .join(" ");
        out.push(BugReport { id, text, label });
    }
    Ok(out)
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<LabeledMatrix> {
    load_matrix_csv_with(path, DEFAULT_LABEL_COLUMN)
}

pub fn load_matrix_csv_with(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledMatrix> {
    read_matrix_csv(File::open(path)?, label_column)
}

fn parse_label(cell: &str, row: usize, column: &str) -> Result<u8> {
    let bad = || Error::Parse {
        row,
        column: Some(column.to_string()),
        message: format!("label {cell:?} is not 0 or 1"),
    };
    let v: f64 = cell.trim().parse().map_err(|_| bad())?;
    if v == 0.0 {
        Ok(NSBR)
    } else if v == 1.0 {
        Ok(SBR)
    } else {
        Err(bad())
    }
}

/// Reads a matrix CSV: every column except `label_column` is a feature.
pub fn read_matrix_csv<R: Read>(reader: R, label_column: &str) -> Result<LabeledMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let headers = match records.next() {
        None => return Err(Error::NoRows),
        Some(h) => h.map_err(|e| record_error(0, e))?,
    };
    let label_col = header_index(&headers, label_column)?;
    let column_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut features = Features::with_columns(column_names.len());
    let mut labels = Vec::new();
    let mut buf = Vec::with_capacity(column_names.len());
    for (row, rec) in records.enumerate() {
        let rec = rec.map_err(|e| record_error(row, e))?;
        buf.clear();
        for (i, cell) in rec.iter().enumerate() {
            if i == label_col {
                labels.push(parse_label(cell, row, label_column)?);
                continue;
            }
            let v: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Parse {
                    row,
                    column: Some(headers.get(i).unwrap_or_default().to_string()),
                    message: format!("{cell:?} is not a finite number"),
                }
            })?;
            buf.push(v);
        }
        features.push_row(&buf)?;
    }
    LabeledMatrix::new(features, labels, column_names)
}

pub fn write_matrix_csv(m: &LabeledMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut f = File::create(path)?;
    write_matrix(m, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Writes features then a trailing `label` column. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_matrix<W: Write>(m: &LabeledMatrix, writer: W) -> Result<()> {
    write_matrix_with(m, writer, DEFAULT_LABEL_COLUMN)
}

pub fn write_matrix_with<W: Write>(m: &LabeledMatrix, writer: W, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = m.column_names().iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(m.n_cols() + 1);
    for (i, row) in m.features().rows().enumerate() {
        rec.clear();
        rec.extend(row.iter().map(|v| v.to_string()));
        rec.push(m.labels()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
