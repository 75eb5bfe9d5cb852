//! Dataset representation, CSV ingestion and the preprocessing chain.
//!
//! A [`FeatureTable`] holds named numeric feature columns plus one raw text
//! label column. All operations are pure: they take a table by reference and
//! return a new one, preserving the relative order of surviving rows.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SCHEMA_VERSION;

/// Raw class name plus its binary encoding (0 = normal, 1 = attack).
///
/// `binary` stays `None` until [`binarize_labels`] has run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassLabel {
    pub raw: String,
    pub binary: Option<u8>,
}

impl ClassLabel {
    pub fn raw(raw: impl Into<String>) -> Self {
        Self {
            raw: raw.into(),
            binary: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    column_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    label_name: String,
    labels: Vec<ClassLabel>,
}

/// One row of a table, detached from it and tagged with an id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
}

impl Instance {
    pub fn new(id: impl Into<String>, feature_names: Vec<String>, values: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            feature_names,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl FeatureTable {
    pub fn new(
        column_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        label_name: impl Into<String>,
        labels: Vec<ClassLabel>,
    ) -> Result<Self> {
        let label_name = label_name.into();
        if column_names.len() != columns.len() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                column_names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) || *name == label_name {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        if let Some((name, col)) = column_names
            .iter()
            .zip(&columns)
            .find(|(_, c)| c.len() != labels.len())
        {
            return Err(Error::Shape(format!(
                "column {name:?} has {} rows, labels have {}",
                col.len(),
                labels.len()
            )));
        }
        Ok(Self {
            column_names,
            columns,
            label_name,
            labels,
        })
    }

    /// Builds a table from row-major data.
    pub fn from_rows(
        column_names: Vec<String>,
        rows: &[Vec<f64>],
        label_name: impl Into<String>,
        labels: Vec<ClassLabel>,
    ) -> Result<Self> {
        let p = column_names.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: p,
                    found: row.len(),
                });
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Self::new(column_names, columns, label_name, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|i| self.columns[i].as_slice())
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| self.row(i)).collect()
    }

    pub fn instance(&self, i: usize, id: impl Into<String>) -> Result<Instance> {
        if i >= self.n_rows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_rows(),
            });
        }
        Ok(Instance::new(id, self.column_names.clone(), self.row(i)))
    }

    /// Binary labels; fails if [`binarize_labels`] has not run.
    pub fn binary_labels(&self) -> Result<Vec<u8>> {
        self.labels
            .iter()
            .map(|l| l.binary.ok_or(Error::NotBinarized))
            .collect()
    }

    /// Histogram of raw labels.
    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for l in &self.labels {
            *counts.entry(l.raw.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            column_names: self.column_names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            label_name: self.label_name.clone(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// Columns at `indices`, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            column_names: indices
                .iter()
                .map(|&i| self.column_names[i].clone())
                .collect(),
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
            label_name: self.label_name.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Appends rows (row-major) after the existing ones.
    pub fn append_rows(&self, rows: &[Vec<f64>], labels: Vec<ClassLabel>) -> Result<FeatureTable> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows, {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut out = self.clone();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.n_features() {
                return Err(Error::RaggedRow {
                    row: self.n_rows() + i,
                    expected: self.n_features(),
                    found: row.len(),
                });
            }
            for (col, &v) in out.columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        out.labels.extend(labels);
        Ok(out)
    }

    pub fn with_label_name(&self, name: impl Into<String>) -> FeatureTable {
        FeatureTable {
            label_name: name.into(),
            ..self.clone()
        }
    }

    pub fn with_labels(&self, labels: Vec<ClassLabel>) -> Result<FeatureTable> {
        Self::new(
            self.column_names.clone(),
            self.columns.clone(),
            self.label_name.clone(),
            labels,
        )
    }

    /// Writes the table as CSV: feature columns followed by the raw label.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        header.push(&self.label_name);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            record.extend(self.columns.iter().map(|c| c[i].to_string()));
            record.push(self.labels[i].raw.clone());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Loads a headed CSV file, keeping `label_name` as raw text.
pub fn load_csv(path: impl AsRef<Path>, label_name: &str) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_csv(file, label_name)
}

/// Parses CSV from any reader. Non-numeric and empty feature cells become
/// NaN; `inf`/`Infinity` parse as infinities. Both count as missing.
pub fn read_csv<R: Read>(reader: R, label_name: &str) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_name)
        .ok_or_else(|| Error::MissingLabelColumn(label_name.to_string()))?;

    let feature_idx: Vec<usize> = (0..header.len()).filter(|&i| i != label_idx).collect();
    let names: Vec<String> = feature_idx.iter().map(|&i| header[i].clone()).collect();
    let mut columns = vec![Vec::new(); names.len()];
    let mut labels = Vec::new();

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (col, &i) in columns.iter_mut().zip(&feature_idx) {
            col.push(parse_cell(&record[i]));
        }
        labels.push(ClassLabel::raw(record[label_idx].trim()));
    }
    FeatureTable::new(names, columns, label_name, labels)
}

fn parse_cell(cell: &str) -> f64 {
    cell.trim().parse::<f64>().unwrap_or(f64::NAN)
}

/// Bookkeeping for everything the preprocessing chain removed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub schema_version: u32,
    pub rows_in: usize,
    pub rows_out: usize,
    pub features_in: usize,
    pub features_out: usize,
    pub dropped_duplicate_rows: usize,
    /// Rows removed because a retained (below-threshold) column was missing
    /// a value there. Always zero with the default threshold.
    pub dropped_missing_rows: usize,
    pub dropped_missing_columns: Vec<String>,
    pub dropped_zero_variance_columns: Vec<String>,
    pub class_counts_before: BTreeMap<String, usize>,
    pub class_counts_after: BTreeMap<String, usize>,
}

impl PreprocessReport {
    /// Folds the result of [`drop_zero_variance`] into the report.
    pub fn record_zero_variance(&mut self, dropped: Vec<String>, table: &FeatureTable) {
        self.dropped_zero_variance_columns = dropped;
        self.features_out = table.n_features();
        self.rows_out = table.n_rows();
        self.class_counts_after = table.class_counts();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    /// Columns whose missing fraction exceeds this are dropped.
    pub missing_threshold: f64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            missing_threshold: 0.0,
        }
    }
}

/// [`clean_with`] under the default config (any missing cell drops its column).
pub fn clean(table: &FeatureTable) -> Result<(FeatureTable, PreprocessReport)> {
    clean_with(table, &CleanConfig::default())
}

/// Drops missing-heavy columns, rows with leftover missing cells, then exact
/// duplicate rows (all features and the raw label; first occurrence wins).
pub fn clean_with(
    table: &FeatureTable,
    config: &CleanConfig,
) -> Result<(FeatureTable, PreprocessReport)> {
    let n = table.n_rows();
    let mut report = PreprocessReport {
        schema_version: SCHEMA_VERSION,
        rows_in: n,
        features_in: table.n_features(),
        class_counts_before: table.class_counts(),
        ..Default::default()
    };

    let mut kept_cols = Vec::new();
    for (j, col) in table.columns.iter().enumerate() {
        let missing = col.iter().filter(|v| !v.is_finite()).count();
        let frac = if n == 0 {
            0.0
        } else {
            missing as f64 / n as f64
        };
        if frac > config.missing_threshold {
            report
                .dropped_missing_columns
                .push(table.column_names[j].clone());
        } else {
            kept_cols.push(j);
        }
    }
    if kept_cols.is_empty() {
        return Err(Error::NoUsableFeatures);
    }
    let narrowed = table.select_columns(&kept_cols);

    let mut seen: HashSet<(Vec<u64>, &str)> = HashSet::with_capacity(n);
    let mut kept_rows = Vec::with_capacity(n);
    for i in 0..n {
        let row = narrowed.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            report.dropped_missing_rows += 1;
            continue;
        }
        // -0.0 and 0.0 are the same value
        let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        if seen.insert((key, narrowed.labels[i].raw.as_str())) {
            kept_rows.push(i);
        } else {
            report.dropped_duplicate_rows += 1;
        }
    }
    let out = narrowed.select_rows(&kept_rows);
    report.rows_out = out.n_rows();
    report.features_out = out.n_features();
    report.class_counts_after = out.class_counts();
    Ok((out, report))
}

/// Removes columns holding fewer than two distinct values.
pub fn drop_zero_variance(table: &FeatureTable) -> Result<(FeatureTable, Vec<String>)> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (j, col) in table.columns.iter().enumerate() {
        let constant = match col.first() {
            Some(&first) => col.iter().all(|&v| v == first),
            None => true,
        };
        if constant {
            dropped.push(table.column_names[j].clone());
        } else {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(Error::NoUsableFeatures);
    }
    Ok((table.select_columns(&kept), dropped))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Per-column min/max recorded at fit time for min-max scaling to [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<ColumnRange>,
    /// Clamp scaled values into [0, 1]. Off by default, so values outside
    /// the fit range extrapolate linearly.
    #[serde(default)]
    pub clamp: bool,
}

impl ScalerParams {
    pub fn range(&self, name: &str) -> Result<&ColumnRange> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    fn ranges_for(&self, names: &[String]) -> Result<Vec<&ColumnRange>> {
        names.iter().map(|n| self.range(n)).collect()
    }

    pub fn scale_row(&self, names: &[String], row: &[f64]) -> Result<Vec<f64>> {
        let ranges = self.ranges_for(names)?;
        Ok(row
            .iter()
            .zip(ranges)
            .map(|(&v, r)| self.scale_value(r, v))
            .collect())
    }

    pub fn unscale_row(&self, names: &[String], row: &[f64]) -> Result<Vec<f64>> {
        let ranges = self.ranges_for(names)?;
        Ok(row
            .iter()
            .zip(ranges)
            .map(|(&v, r)| unscale_value(r, v))
            .collect())
    }

    fn scale_value(&self, r: &ColumnRange, v: f64) -> f64 {
        let s = (v - r.min) / (r.max - r.min);
        if self.clamp {
            s.clamp(0.0, 1.0)
        } else {
            s
        }
    }
}

fn unscale_value(r: &ColumnRange, v: f64) -> f64 {
    v * (r.max - r.min) + r.min
}

pub fn fit_scaler(table: &FeatureTable) -> Result<ScalerParams> {
    if table.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let mut columns = Vec::with_capacity(table.n_features());
    for (name, col) in table.column_names.iter().zip(&table.columns) {
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::DegenerateRange(name.clone()));
        }
        columns.push(ColumnRange {
            name: name.clone(),
            min,
            max,
        });
    }
    Ok(ScalerParams {
        columns,
        clamp: false,
    })
}

pub fn apply_scaler(table: &FeatureTable, params: &ScalerParams) -> Result<FeatureTable> {
    map_columns(table, params, |r, v| params.scale_value(r, v))
}

pub fn invert_scaler(table: &FeatureTable, params: &ScalerParams) -> Result<FeatureTable> {
    map_columns(table, params, unscale_value)
}

fn map_columns(
    table: &FeatureTable,
    params: &ScalerParams,
    f: impl Fn(&ColumnRange, f64) -> f64,
) -> Result<FeatureTable> {
    let ranges = params.ranges_for(&table.column_names)?;
    let columns = table
        .columns
        .iter()
        .zip(ranges)
        .map(|(col, r)| col.iter().map(|&v| f(r, v)).collect())
        .collect();
    Ok(FeatureTable {
        column_names: table.column_names.clone(),
        columns,
        label_name: table.label_name.clone(),
        labels: table.labels.clone(),
    })
}

/// Which raw labels are normal and which are attacks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub normal: String,
    pub attacks: BTreeSet<String>,
}

impl LabelMap {
    pub fn new<I, S>(normal: impl Into<String>, attacks: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            normal: normal.into(),
            attacks: attacks.into_iter().map(Into::into).collect(),
        }
    }

    /// Every label in `table` other than `normal` is an attack.
    pub fn infer(table: &FeatureTable, normal: &str) -> Self {
        Self::new(
            normal,
            table.class_counts().into_keys().filter(|k| k != normal),
        )
    }

    pub fn encode(&self, raw: &str) -> Option<u8> {
        if raw == self.normal {
            Some(0)
        } else if self.attacks.contains(raw) {
            Some(1)
        } else {
            None
        }
    }
}

/// Fills in `ClassLabel::binary`; raw labels are kept.
pub fn binarize_labels(table: &FeatureTable, map: &LabelMap) -> Result<FeatureTable> {
    let mut unseen = BTreeSet::new();
    let labels: Vec<ClassLabel> = table
        .labels
        .iter()
        .map(|l| {
            let binary = map.encode(&l.raw);
            if binary.is_none() {
                unseen.insert(l.raw.clone());
            }
            ClassLabel {
                raw: l.raw.clone(),
                binary,
            }
        })
        .collect();
    if !unseen.is_empty() {
        return Err(Error::UnseenLabels(unseen.into_iter().collect()));
    }
    table.with_labels(labels)
}
