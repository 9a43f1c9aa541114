//! Batch orchestration: one seeded config drives generate, screen, train,
//! predict, and evaluate stages, each writing fingerprinted artifacts
//! into a run directory.
//!
//! All randomness flows from the single master seed; per-stage seeds are
//! derived deterministically and recorded in the outputs. Rerunning a
//! config snapshot reproduces every artifact byte for byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{
    derive_ipm_stds, fit_gaussian_classifier, fit_weighted_regressor, npm_stds,
};
use crate::conformal::{calibrate_icp, fit_icp_with, IcpOptions, QuantileRule};
use crate::data::{
    generate_synthetic_fire, generate_synthetic_traffic, load_csv, split_three_way,
    CalibrationMode, ColumnSchema, Dataset, SplitSpec, TargetKind, TrafficTask,
};
use crate::decision::{
    binary_decision, interval_mean, multiclass_decision, regression_decision, ClassThresholds,
};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, ForestParams, MaxFeatures};
use crate::metrics::{classification_metrics, interval_metrics, regression_metrics, MetricsReport};
use crate::model_doc::{ModelDocument, ModelKind, ModelPayload, MODEL_DOC_VERSION};
use crate::reference;
use crate::sobol::{estimate_indices, saltelli_sample, select_features, InputRange};
use crate::util::derive_seed;

/// Seed streams for the pipeline stages.
mod stream {
    pub const GENERATE: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const FOREST: u64 = 2;
    pub const SOBOL: u64 = 3;
}

/// Prediction problem the run addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binary,
    Multilevel,
    Regression,
}

impl Task {
    pub fn is_classification(&self) -> bool {
        !matches!(self, Task::Regression)
    }

    /// Class count for classification tasks (multilevel is the 4-level
    /// congestion scheme unless the dataset schema says otherwise).
    pub fn default_n_classes(&self) -> Option<usize> {
        match self {
            Task::Binary => Some(2),
            Task::Multilevel => Some(4),
            Task::Regression => None,
        }
    }

    /// The task a target encoding implies.
    pub fn from_target_kind(kind: &TargetKind) -> Task {
        match kind {
            TargetKind::Binary => Task::Binary,
            TargetKind::Multiclass { .. } => Task::Multilevel,
            TargetKind::Regression => Task::Regression,
        }
    }
}

/// Where the run's dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Load a CSV against the config's schema.
    Csv { path: String },
    /// Synthetic lane-detector data; the config task picks the target.
    SyntheticTraffic { n: usize },
    /// Synthetic fire-sensor data (binary target).
    SyntheticFire { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub calibration_mode: CalibrationMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 1.0 / 3.0,
            calibration_mode: CalibrationMode::EvenSplit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolConfig {
    pub n: usize,
    pub threshold: f64,
    /// Explicit screening seed; derived from the master seed when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SobolConfig {
    fn default() -> Self {
        Self {
            n: 1024,
            threshold: 0.05,
            seed: None,
        }
    }
}

/// Forest hyperparameters without a seed; the run seeds trees itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        Self {
            n_trees: p.n_trees,
            max_depth: p.max_depth,
            min_samples_split: p.min_samples_split,
            max_features: p.max_features,
            bootstrap: p.bootstrap,
        }
    }
}

impl ForestConfig {
    pub fn to_params(&self, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            max_features: self.max_features,
            bootstrap: self.bootstrap,
            seed,
        }
    }
}

fn default_alpha() -> f64 {
    0.03
}

fn default_k() -> usize {
    5
}

fn default_beta() -> f64 {
    0.01
}

/// Everything one reproducible run needs. Serializes losslessly; the
/// SHA-256 of the canonical serialization is the config fingerprint every
/// artifact carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    /// Required when `data` is a CSV source; synthetic sources carry
    /// their own schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<ColumnSchema>,
    pub task: Task,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub sobol: SobolConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub quantile_rule: QuantileRule,
    #[serde(default)]
    pub knn_scale: bool,
}

impl RunConfig {
    pub fn synthetic_traffic(n: usize, task: Task, seed: u64) -> Self {
        Self {
            data: DataSource::SyntheticTraffic { n },
            schema: None,
            task,
            alpha: default_alpha(),
            seed,
            split: SplitConfig::default(),
            sobol: SobolConfig::default(),
            forest: ForestConfig::default(),
            k: default_k(),
            beta: default_beta(),
            quantile_rule: QuantileRule::default(),
            knn_scale: false,
        }
    }

    pub fn synthetic_fire(n: usize, seed: u64) -> Self {
        Self {
            data: DataSource::SyntheticFire { n },
            ..Self::synthetic_traffic(n, Task::Binary, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam(format!(
                "alpha {} must be in (0, 1)",
                self.alpha
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParam("beta must be > 0".into()));
        }
        if !(self.sobol.threshold >= 0.0 && self.sobol.threshold < 1.0) {
            return Err(Error::InvalidParam(
                "sobol threshold must be in [0, 1)".into(),
            ));
        }
        if matches!(self.data, DataSource::Csv { .. }) && self.schema.is_none() {
            return Err(Error::InvalidParam(
                "csv data source needs a schema in the config".into(),
            ));
        }
        self.forest.to_params(0).validate()?;
        SplitSpec {
            test_fraction: self.split.test_fraction,
            calibration_mode: self.split.calibration_mode,
            seed: 0,
        }
        .validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds {
            generate: derive_seed(self.seed, stream::GENERATE),
            split: derive_seed(self.seed, stream::SPLIT),
            forest: derive_seed(self.seed, stream::FOREST),
            sobol: self
                .sobol
                .seed
                .unwrap_or_else(|| derive_seed(self.seed, stream::SOBOL)),
        }
    }

    fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.split.test_fraction,
            calibration_mode: self.split.calibration_mode,
            seed: self.stage_seeds().split,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }
}

/// Resolved per-stage seeds, recorded in every summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub generate: u64,
    pub split: u64,
    pub forest: u64,
    pub sobol: u64,
}

/// Materialize the run's dataset (generator or CSV load).
pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    config.validate()?;
    let seeds = config.stage_seeds();
    match &config.data {
        DataSource::Csv { path } => {
            let schema = config.schema.as_ref().expect("validated above");
            load_csv(path, schema)
        }
        DataSource::SyntheticTraffic { n } => {
            let task = match config.task {
                Task::Binary => TrafficTask::Binary,
                Task::Multilevel => TrafficTask::Multilevel,
                Task::Regression => TrafficTask::Regression,
            };
            generate_synthetic_traffic(*n, seeds.generate, task)
        }
        DataSource::SyntheticFire { n } => {
            if config.task != Task::Binary {
                return Err(Error::InvalidParam(
                    "fire data only supports the binary task".into(),
                ));
            }
            generate_synthetic_fire(*n, seeds.generate)
        }
    }
}

/// Sensitivity screening report: indices per feature over the training
/// partition, plus the thresholded selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolReport {
    pub features: Vec<String>,
    pub s1: Vec<f64>,
    pub st: Vec<f64>,
    pub output_variance: f64,
    pub degenerate: bool,
    pub ranges: Vec<(f64, f64)>,
    pub n: usize,
    pub seed: u64,
    pub threshold: f64,
    pub input_distribution: String,
    pub selected_indices: Vec<usize>,
    pub selected_features: Vec<String>,
    pub config_fingerprint: String,
    pub dataset_fingerprint: String,
}

impl SobolReport {
    /// Plot-ready TSV: feature, s1, st.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("feature\ts1\tst\n");
        for i in 0..self.features.len() {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.features[i], self.s1[i], self.st[i]
            ));
        }
        out
    }
}

/// Screen features by total Sobol index of a surrogate forest fitted on
/// the training partition, sampling uniformly over each feature's
/// observed training range.
pub fn run_sobol(config: &RunConfig, data: &Dataset) -> Result<SobolReport> {
    config.validate()?;
    let seeds = config.stage_seeds();
    let split = split_three_way(data, &config.split_spec())?;
    let train = &split.train;

    let surrogate = fit_forest(&train.x, &train.y, &config.forest.to_params(seeds.forest))?;
    let ranges = InputRange::new(train.feature_ranges())?;
    let sample = saltelli_sample(&ranges, config.sobol.n, seeds.sobol)?;
    let result = estimate_indices(
        |x| surrogate.predict(x).expect("surrogate dims match design"),
        &sample,
    );
    let selected_indices = select_features(&result, config.sobol.threshold);
    let selected_features = selected_indices
        .iter()
        .map(|&i| data.schema.feature_names[i].clone())
        .collect();

    Ok(SobolReport {
        features: data.schema.feature_names.clone(),
        s1: result.s1,
        st: result.st,
        output_variance: result.output_variance,
        degenerate: result.degenerate,
        ranges: ranges.bounds,
        n: config.sobol.n,
        seed: seeds.sobol,
        threshold: config.sobol.threshold,
        input_distribution: "independent uniform over per-feature training ranges".into(),
        selected_indices,
        selected_features,
        config_fingerprint: config.fingerprint(),
        dataset_fingerprint: data.fingerprint(),
    })
}

/// Train one model kind on the config's training partition.
///
/// The conformal model consumes only `selected_features` and calibrates
/// on the calibration partition; the baselines consume every feature.
pub fn train_model(
    config: &RunConfig,
    data: &Dataset,
    selected_features: &[String],
    kind: ModelKind,
) -> Result<ModelDocument> {
    config.validate()?;
    let seeds = config.stage_seeds();
    let split = split_three_way(data, &config.split_spec())?;

    let (selected, payload) = match kind {
        ModelKind::MlCp => {
            let indices: Vec<usize> = selected_features
                .iter()
                .map(|name| {
                    data.schema
                        .feature_names
                        .iter()
                        .position(|f| f == name)
                        .ok_or_else(|| Error::SchemaMismatch(format!("unknown feature `{name}`")))
                })
                .collect::<Result<_>>()?;
            let train = split.train.select_features(&indices);
            let cal = split
                .calibrate
                .as_ref()
                .ok_or(Error::EmptyCalibrationSet)?
                .select_features(&indices);
            let icp = fit_icp_with(
                &train,
                &config.forest.to_params(seeds.forest),
                config.k,
                config.beta,
                IcpOptions {
                    quantile_rule: config.quantile_rule,
                    knn_scale: config.knn_scale,
                },
            )?;
            let icp = calibrate_icp(icp, &cal)?;
            (selected_features.to_vec(), ModelPayload::Conformal { icp })
        }
        ModelKind::Npm | ModelKind::Ipm => {
            let train = &split.train;
            let stds = match kind {
                ModelKind::Npm => npm_stds(train.n_features()),
                _ => derive_ipm_stds(train)?,
            };
            let payload = if config.task.is_classification() {
                ModelPayload::GaussianClass {
                    model: fit_gaussian_classifier(&train.x, &train.y, stds)?,
                }
            } else {
                ModelPayload::WeightedRegression {
                    model: fit_weighted_regressor(&train.x, &train.y, stds)?,
                }
            };
            (data.schema.feature_names.clone(), payload)
        }
    };

    Ok(ModelDocument {
        format_version: MODEL_DOC_VERSION,
        model_kind: kind,
        schema: data.schema.clone(),
        selected_features: selected,
        config_fingerprint: Some(config.fingerprint()),
        payload,
    })
}

/// One prediction row: the decided output plus, for conformal models,
/// the interval it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub row: usize,
    /// Class label (as a whole number) or regression value.
    pub output: f64,
    /// Confidence percent (classification) or interval width (regression).
    pub confidence_or_width: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

/// Predict every dataset row with a model document. The task comes from
/// the document's target encoding.
pub fn predict_with_document(
    doc: &ModelDocument,
    data: &Dataset,
    alpha: f64,
) -> Result<Vec<PredictionRecord>> {
    doc.check_dataset(data)?;
    let task = Task::from_target_kind(&doc.schema.target_kind);
    let indices = doc.selected_indices()?;
    let projected = data.select_features(&indices);
    let n_classes = doc
        .schema
        .target_kind
        .n_classes()
        .or(task.default_n_classes());

    let mut records = Vec::with_capacity(projected.n_rows());
    for i in 0..projected.n_rows() {
        let x = projected.x.row(i);
        let record = match &doc.payload {
            ModelPayload::Conformal { icp } => {
                let interval = icp.predict_interval(x, alpha)?;
                let mean = interval_mean(&interval);
                match task {
                    Task::Binary => {
                        let p = binary_decision(mean);
                        PredictionRecord {
                            row: i,
                            output: p.label as f64,
                            confidence_or_width: Some(p.confidence),
                            lo: Some(interval.lo),
                            hi: Some(interval.hi),
                        }
                    }
                    Task::Multilevel => {
                        let thresholds =
                            ClassThresholds::integer_midpoints(n_classes.unwrap_or(4))?;
                        let p = multiclass_decision(mean, &thresholds);
                        PredictionRecord {
                            row: i,
                            output: p.label as f64,
                            confidence_or_width: Some(p.confidence),
                            lo: Some(interval.lo),
                            hi: Some(interval.hi),
                        }
                    }
                    Task::Regression => {
                        let p = regression_decision(&interval);
                        PredictionRecord {
                            row: i,
                            output: p.value,
                            confidence_or_width: Some(p.width),
                            lo: Some(interval.lo),
                            hi: Some(interval.hi),
                        }
                    }
                }
            }
            ModelPayload::GaussianClass { model } => PredictionRecord {
                row: i,
                output: model.predict(x)? as f64,
                confidence_or_width: None,
                lo: None,
                hi: None,
            },
            ModelPayload::WeightedRegression { model } => PredictionRecord {
                row: i,
                output: model.predict(x)?,
                confidence_or_width: None,
                lo: None,
                hi: None,
            },
        };
        records.push(record);
    }
    Ok(records)
}

fn format_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

/// Write predictions as CSV: row id, label (or value), confidence (or
/// width), interval lo, interval hi. Cells a model kind does not produce
/// stay empty.
pub fn predictions_to_csv(task: Task, records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    out.push_str(match task {
        Task::Regression => "row,value,width,lo,hi\n",
        _ => "row,label,confidence,lo,hi\n",
    });
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.row,
            r.output,
            format_opt(r.confidence_or_width),
            format_opt(r.lo),
            format_opt(r.hi)
        ));
    }
    out
}

/// Parse a predictions CSV produced by [`predictions_to_csv`].
pub fn predictions_from_csv(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let parse_opt = |cell: &str| -> Result<Option<f64>> {
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse::<f64>()
            .map(Some)
            .map_err(|_| Error::InvalidParam(format!("bad numeric cell `{cell}`")))
    };
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::InvalidParam("prediction rows need 5 columns".into()));
        }
        records.push(PredictionRecord {
            row: rec[0]
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad row id `{}`", &rec[0])))?,
            output: rec[1]
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad output `{}`", &rec[1])))?,
            confidence_or_width: parse_opt(&rec[2])?,
            lo: parse_opt(&rec[3])?,
            hi: parse_opt(&rec[4])?,
        });
    }
    Ok(records)
}

/// Split/seed/alpha context echoed into evaluation reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportContext {
    pub alpha: f64,
    pub seed: u64,
    pub split: SplitConfig,
}

/// Metrics for one model on one dataset, plus the run context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_kind: ModelKind,
    pub task: Task,
    pub metrics: MetricsReport,
    pub config: ReportContext,
    pub config_fingerprint: String,
    pub dataset_fingerprint: String,
    /// Side-by-side published reference rows for the matching task.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<serde_json::Value>,
}

/// Score predictions against true targets.
pub fn evaluate_records(
    records: &[PredictionRecord],
    y_true: &[f64],
    task: Task,
) -> Result<MetricsReport> {
    if records.len() != y_true.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: y_true.len(),
        });
    }
    let outputs: Vec<f64> = records.iter().map(|r| r.output).collect();
    let mut report = match task {
        Task::Regression => regression_metrics(y_true, &outputs)?,
        _ => {
            let n_classes = task
                .default_n_classes()
                .expect("classification task")
                .max(y_true.iter().chain(&outputs).fold(0.0f64, |m, &v| m.max(v)) as usize + 1);
            classification_metrics(y_true, &outputs, n_classes)?
        }
    };
    // Interval quality whenever the records carry intervals.
    if records.iter().all(|r| r.lo.is_some() && r.hi.is_some()) {
        let intervals: Vec<crate::conformal::PredictionInterval> = records
            .iter()
            .map(|r| crate::conformal::PredictionInterval {
                lo: r.lo.unwrap(),
                hi: r.hi.unwrap(),
                alpha: 0.0,
            })
            .collect();
        report.intervals = interval_metrics(&intervals, y_true)?.intervals;
    }
    Ok(report)
}

/// Build the full evaluation report, optionally attaching reference rows
/// (`reference_key` like `traffic_binary`).
pub fn evaluation_report(
    config: &RunConfig,
    model_kind: ModelKind,
    metrics: MetricsReport,
    dataset_fingerprint: String,
    reference_key: Option<&str>,
) -> EvaluationReport {
    let reference = reference_key
        .and_then(reference::for_task)
        .map(|rows| serde_json::to_value(rows).expect("reference rows serialize"));
    EvaluationReport {
        model_kind,
        task: config.task,
        metrics,
        config: ReportContext {
            alpha: config.alpha,
            seed: config.seed,
            split: config.split,
        },
        config_fingerprint: config.fingerprint(),
        dataset_fingerprint,
        reference,
    }
}

/// Reference-table key for a run, when one matches.
pub fn reference_key(config: &RunConfig) -> Option<&'static str> {
    match (&config.data, config.task) {
        (DataSource::SyntheticTraffic { .. }, Task::Binary) => Some("traffic_binary"),
        (DataSource::SyntheticTraffic { .. }, Task::Multilevel) => Some("traffic_multilevel"),
        (DataSource::SyntheticTraffic { .. }, Task::Regression) => Some("traffic_regression"),
        (DataSource::SyntheticFire { .. }, Task::Binary) => Some("fire_binary"),
        _ => None,
    }
}

/// Per-model block of a run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_kind: ModelKind,
    pub metrics: MetricsReport,
}

/// Everything a finished run reports, serialized as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_fingerprint: String,
    pub config: RunConfig,
    pub stage_seeds: StageSeeds,
    pub dataset_fingerprint: String,
    pub sobol: SobolReport,
    pub models: Vec<ModelSummary>,
}

impl RunSummary {
    pub fn model(&self, kind: ModelKind) -> Option<&MetricsReport> {
        self.models
            .iter()
            .find(|m| m.model_kind == kind)
            .map(|m| &m.metrics)
    }

    /// Human-readable comparison table, rendered from the summary (never
    /// computed separately).
    pub fn render_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let headers: Vec<&str> = match self.config.task {
            Task::Regression => vec!["model", "r2", "mae", "mse", "medae", "coverage", "width"],
            _ => vec![
                "model",
                "accuracy",
                "sensitivity",
                "specificity",
                "coverage",
                "width",
            ],
        };
        out.push_str(&headers.join("\t"));
        out.push('\n');
        for m in &self.models {
            let mut cells = vec![m.model_kind.as_str().to_string()];
            match self.config.task {
                Task::Regression => {
                    let r = m.metrics.regression.as_ref();
                    cells.push(fmt(r.and_then(|r| r.r2)));
                    cells.push(fmt(r.map(|r| r.mae)));
                    cells.push(fmt(r.map(|r| r.mse)));
                    cells.push(fmt(r.map(|r| r.medae)));
                }
                _ => {
                    let c = m.metrics.classification.as_ref();
                    cells.push(fmt(c.and_then(|c| c.accuracy)));
                    cells.push(fmt(c.and_then(|c| c.sensitivity)));
                    cells.push(fmt(c.and_then(|c| c.specificity)));
                }
            }
            let iv = m.metrics.intervals.as_ref();
            cells.push(fmt(iv.map(|i| i.coverage)));
            cells.push(fmt(iv.map(|i| i.mean_width)));
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Fingerprint sidecar written next to CSV artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config_fingerprint: String,
    pub dataset_fingerprint: Option<String>,
    pub n_rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_kind: Option<ModelKind>,
}

fn meta_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".meta.json");
    csv_path.with_file_name(name)
}

/// Write a CSV artifact plus its fingerprint sidecar.
pub fn write_csv_artifact(path: &Path, bytes: &[u8], meta: &ArtifactMeta) -> Result<()> {
    std::fs::write(path, bytes)?;
    std::fs::write(meta_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Read a sidecar if one exists next to the CSV.
pub fn read_artifact_meta(csv_path: &Path) -> Option<ArtifactMeta> {
    let text = std::fs::read_to_string(meta_path(csv_path)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Hex SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// True-target column of a CSV file: the named column, or the last one
/// when no name is given.
pub fn read_target_column(path: &Path, name: Option<&str>) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = match name {
        Some(n) => headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| Error::MissingColumn(n.to_string()))?,
        None => headers.len().checked_sub(1).ok_or(Error::EmptyDataset)?,
    };
    let col_name = headers.get(col).unwrap_or("").to_string();
    let mut values = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = record.get(col).unwrap_or("");
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                return Err(Error::NonNumericCell {
                    row,
                    column: col_name,
                })
            }
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(values)
}

/// Hard-fail when two artifacts carry different config fingerprints.
pub fn check_fingerprints(expected: &str, got: Option<&str>) -> Result<()> {
    match got {
        Some(g) if g != expected => Err(Error::FingerprintMismatch {
            expected: expected.to_string(),
            got: g.to_string(),
        }),
        _ => Ok(()),
    }
}

/// Run the whole workflow into `out_dir`: generate, screen, then train,
/// predict, and evaluate the conformal model and both baselines. Returns
/// the summary also written as `summary.json`.
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let fingerprint = config.fingerprint();
    let seeds = config.stage_seeds();
    config.save(out_dir.join("config.json"))?;

    // generate
    let data = load_dataset(config).map_err(|e| e.in_stage("generate"))?;
    let dataset_fingerprint = data.fingerprint();
    write_csv_artifact(
        &out_dir.join("dataset.csv"),
        &data.to_csv_bytes(),
        &ArtifactMeta {
            config_fingerprint: fingerprint.clone(),
            dataset_fingerprint: Some(dataset_fingerprint.clone()),
            n_rows: data.n_rows(),
            model_kind: None,
        },
    )
    .map_err(|e| e.in_stage("generate"))?;

    // materialize the test partition for the predict/evaluate stages
    let split = split_three_way(&data, &config.split_spec()).map_err(|e| e.in_stage("split"))?;
    let test = split.test;
    write_csv_artifact(
        &out_dir.join("test.csv"),
        &test.to_csv_bytes(),
        &ArtifactMeta {
            config_fingerprint: fingerprint.clone(),
            dataset_fingerprint: Some(test.fingerprint()),
            n_rows: test.n_rows(),
            model_kind: None,
        },
    )
    .map_err(|e| e.in_stage("split"))?;

    // sobol screening
    let sobol = run_sobol(config, &data).map_err(|e| e.in_stage("sobol"))?;
    std::fs::write(
        out_dir.join("sobol.json"),
        serde_json::to_string_pretty(&sobol)?,
    )?;
    std::fs::write(out_dir.join("sobol.tsv"), sobol.to_tsv())?;

    let ref_key = reference_key(config);
    let mut models = Vec::new();
    for kind in [ModelKind::MlCp, ModelKind::Npm, ModelKind::Ipm] {
        let doc = train_model(config, &data, &sobol.selected_features, kind)
            .map_err(|e| e.in_stage("train"))?;
        doc.save(out_dir.join(format!("model_{}.json", kind.as_str())))?;

        let records =
            predict_with_document(&doc, &test, config.alpha).map_err(|e| e.in_stage("predict"))?;
        write_csv_artifact(
            &out_dir.join(format!("predictions_{}.csv", kind.as_str())),
            predictions_to_csv(config.task, &records).as_bytes(),
            &ArtifactMeta {
                config_fingerprint: fingerprint.clone(),
                dataset_fingerprint: Some(test.fingerprint()),
                n_rows: records.len(),
                model_kind: Some(kind),
            },
        )
        .map_err(|e| e.in_stage("predict"))?;

        let metrics =
            evaluate_records(&records, &test.y, config.task).map_err(|e| e.in_stage("evaluate"))?;
        let report = evaluation_report(
            config,
            kind,
            metrics.clone(),
            dataset_fingerprint.clone(),
            ref_key,
        );
        std::fs::write(
            out_dir.join(format!("evaluation_{}.json", kind.as_str())),
            serde_json::to_string_pretty(&report)?,
        )?;
        models.push(ModelSummary {
            model_kind: kind,
            metrics,
        });
    }

    let summary = RunSummary {
        config_fingerprint: fingerprint,
        config: config.clone(),
        stage_seeds: seeds,
        dataset_fingerprint,
        sobol,
        models,
    };
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}
