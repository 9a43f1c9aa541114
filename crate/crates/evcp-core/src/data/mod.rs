//! Labeled feature tables: loading, validation, splitting, synthesis.
//!
//! A [`Dataset`] holds the primitive-event feature matrix and the target
//! vector for one prediction task. All types here are immutable after
//! construction.

mod synthetic;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use synthetic::{
    fire_event_rule, generate_synthetic_fire, generate_synthetic_traffic, TrafficTask,
    JAM_LEVEL_ONE_MAX_M, JAM_LEVEL_TWO_MAX_M, JAM_MAX_M,
};

/// What the target column encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Binary,
    Multiclass { n_classes: usize },
    Regression,
}

impl TargetKind {
    /// Number of classes, if this is a classification target.
    pub fn n_classes(&self) -> Option<usize> {
        match self {
            TargetKind::Binary => Some(2),
            TargetKind::Multiclass { n_classes } => Some(*n_classes),
            TargetKind::Regression => None,
        }
    }
}

/// Column layout of a dataset: feature columns, target column, and the
/// optional timestamp / sensor-id columns carried through from the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub target_kind: TargetKind,
    #[serde(default)]
    pub timestamp_column: Option<String>,
    #[serde(default)]
    pub sensor_id_column: Option<String>,
}

impl ColumnSchema {
    pub fn new(
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        target_kind: TargetKind,
    ) -> Result<Self> {
        let schema = Self {
            feature_names,
            target_name: target_name.into(),
            target_kind,
            timestamp_column: None,
            sensor_id_column: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_names.is_empty() {
            return Err(Error::InvalidParam("schema has no feature columns".into()));
        }
        for (i, a) in self.feature_names.iter().enumerate() {
            for b in &self.feature_names[i + 1..] {
                if a == b {
                    return Err(Error::InvalidParam(format!(
                        "duplicate feature column `{a}`"
                    )));
                }
            }
        }
        if self.feature_names.contains(&self.target_name) {
            return Err(Error::InvalidParam(format!(
                "target column `{}` is also listed as a feature",
                self.target_name
            )));
        }
        if let TargetKind::Multiclass { n_classes } = self.target_kind {
            if n_classes < 2 {
                return Err(Error::InvalidParam(
                    "multiclass target needs at least 2 classes".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// A validated feature table: `x` rows are events, columns follow
/// `schema.feature_names` order; `y` holds the target (class index as a
/// whole number for classification, target units for regression).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: ColumnSchema,
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(schema: ColumnSchema, x: Matrix, y: Vec<f64>) -> Result<Self> {
        schema.validate()?;
        if x.n_rows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.n_rows(),
                right: y.len(),
            });
        }
        if x.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if x.n_cols() != schema.n_features() {
            return Err(Error::DimensionMismatch {
                expected: schema.n_features(),
                got: x.n_cols(),
            });
        }
        if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if let Some(n_classes) = schema.target_kind.n_classes() {
            for (i, &v) in y.iter().enumerate() {
                if v.fract() != 0.0 || v < 0.0 || v >= n_classes as f64 {
                    return Err(Error::InvalidParam(format!(
                        "row {i}: target {v} is not a class index below {n_classes}"
                    )));
                }
            }
        }
        Ok(Self { schema, x, y })
    }

    pub fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    /// Dataset restricted to the given rows (in the given order).
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Dataset restricted to the given feature columns (in the given order).
    pub fn select_features(&self, idx: &[usize]) -> Dataset {
        let mut schema = self.schema.clone();
        schema.feature_names = idx
            .iter()
            .map(|&j| self.schema.feature_names[j].clone())
            .collect();
        Dataset {
            schema,
            x: self.x.select_cols(idx),
            y: self.y.clone(),
        }
    }

    /// Per-feature observed [min, max] over the rows.
    pub fn feature_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.n_features())
            .map(|j| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..self.n_rows() {
                    let v = self.x.get(i, j);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            })
            .collect()
    }

    /// Serialize as CSV (header row, `.` decimal separator, UTF-8).
    ///
    /// Values are written in the shortest form that parses back to the
    /// identical `f64`, so a write/load cycle is exact.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let mut header: Vec<&str> = self
                .schema
                .feature_names
                .iter()
                .map(|s| s.as_str())
                .collect();
            header.push(&self.schema.target_name);
            w.write_record(&header).expect("in-memory csv write");
            let mut record = Vec::with_capacity(header.len());
            for i in 0..self.n_rows() {
                record.clear();
                for &v in self.x.row(i) {
                    record.push(format_f64(v));
                }
                record.push(format_f64(self.y[i]));
                w.write_record(&record).expect("in-memory csv write");
            }
            w.flush().expect("in-memory csv write");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_csv_bytes())?;
        Ok(())
    }

    /// SHA-256 of the CSV serialization, hex-encoded.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_csv_bytes()))
    }
}

fn format_f64(v: f64) -> String {
    // `{}` on f64 produces the shortest representation that round-trips.
    format!("{v}")
}

/// Load a CSV file against a schema. Columns are reordered to schema
/// order; extra columns are ignored. Any missing or non-numeric cell in a
/// schema column rejects the file.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_reader(file, schema)
}

/// Same as [`load_csv`] for any reader.
pub fn load_csv_reader(reader: impl std::io::Read, schema: &ColumnSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let locate = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let feature_cols: Vec<usize> = schema
        .feature_names
        .iter()
        .map(|n| locate(n))
        .collect::<Result<_>>()?;
    let target_col = locate(&schema.target_name)?;
    // Declared context columns must exist, though their values are not
    // consumed as features.
    for extra in [&schema.timestamp_column, &schema.sensor_id_column]
        .into_iter()
        .flatten()
    {
        locate(extra)?;
    }

    let parse_cell = |record: &csv::StringRecord, row: usize, col: usize, name: &str| {
        let cell = record.get(col).unwrap_or("");
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::NonNumericCell {
                row,
                column: name.to_string(),
            }),
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(feature_cols.len());
        for (&col, name) in feature_cols.iter().zip(&schema.feature_names) {
            row.push(parse_cell(&record, row_idx, col, name)?);
        }
        targets.push(parse_cell(
            &record,
            row_idx,
            target_col,
            &schema.target_name,
        )?);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(schema.clone(), Matrix::from_rows(&rows)?, targets)
}

/// Whether a held-out calibration partition is carved out of the
/// non-test rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    None,
    EvenSplit,
}

/// Three-way split specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub calibration_mode: CalibrationMode,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidParam(format!(
                "test_fraction {} must be in (0, 1)",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Outcome of [`split_three_way`]: disjoint partitions plus the original
/// row indices backing each one.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Dataset,
    pub calibrate: Option<Dataset>,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub calibrate_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Partition sizes before any shuffling happens.
///
/// test = round(n * f); with an even split, calibrate = floor((n - test)/2)
/// and train takes the remainder.
pub fn partition_sizes(n: usize, spec: &SplitSpec) -> Result<(usize, usize, usize)> {
    spec.validate()?;
    let test = (n as f64 * spec.test_fraction).round() as usize;
    if test == 0 || test >= n {
        return Err(Error::PartitionTooSmall {
            partition: if test == 0 { "test" } else { "train" },
        });
    }
    let rest = n - test;
    let (calibrate, train) = match spec.calibration_mode {
        CalibrationMode::None => (0, rest),
        CalibrationMode::EvenSplit => {
            let calibrate = rest / 2;
            (calibrate, rest - calibrate)
        }
    };
    if matches!(spec.calibration_mode, CalibrationMode::EvenSplit) && calibrate == 0 {
        return Err(Error::PartitionTooSmall {
            partition: "calibrate",
        });
    }
    if train == 0 {
        return Err(Error::PartitionTooSmall { partition: "train" });
    }
    Ok((train, calibrate, test))
}

/// Deterministically shuffle row indices with the spec seed and carve
/// them into test / calibrate / train partitions.
pub fn split_three_way(d: &Dataset, spec: &SplitSpec) -> Result<SplitResult> {
    let n = d.n_rows();
    let (n_train, n_cal, n_test) = partition_sizes(n, spec)?;

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);

    let test_indices = indices[..n_test].to_vec();
    let calibrate_indices = indices[n_test..n_test + n_cal].to_vec();
    let train_indices = indices[n_test + n_cal..].to_vec();
    debug_assert_eq!(train_indices.len(), n_train);

    let calibrate = if n_cal > 0 {
        Some(d.select_rows(&calibrate_indices))
    } else {
        None
    };
    Ok(SplitResult {
        train: d.select_rows(&train_indices),
        calibrate,
        test: d.select_rows(&test_indices),
        train_indices,
        calibrate_indices,
        test_indices,
    })
}
