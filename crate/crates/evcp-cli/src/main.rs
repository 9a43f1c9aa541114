//! `evcp` — complex-event prediction with calibrated uncertainty.
//!
//! Subcommands cover the batch workflow end to end: `generate` synthetic
//! sensor tables, `sobol` sensitivity screening, `train` / `predict` for
//! the conformal model and the probabilistic baselines, `evaluate` for
//! metrics reports, and `run` for the whole pipeline in one seeded,
//! reproducible invocation.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 model or schema
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use evcp_core::conformal::QuantileRule;
use evcp_core::data::{load_csv, CalibrationMode};
use evcp_core::error::{Error, Result};
use evcp_core::forest::MaxFeatures;
use evcp_core::model_doc::{ModelDocument, ModelKind};
use evcp_core::pipeline::{
    check_fingerprints, evaluate_records, evaluation_report, load_dataset, predictions_from_csv,
    predictions_to_csv, read_artifact_meta, read_target_column, run_experiment, run_sobol,
    sha256_hex, write_csv_artifact, ArtifactMeta, DataSource, ReportContext, RunConfig, Task,
};

#[derive(Parser)]
#[command(
    name = "evcp",
    version,
    about = "Complex-event prediction with conformal uncertainty",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic sensor dataset as CSV plus a fingerprint sidecar.
    Generate(GenerateArgs),
    /// Screen features by Sobol indices of a surrogate model.
    Sobol(SobolArgs),
    /// Fit a model on the training split and write a model document.
    Train(TrainArgs),
    /// Predict a dataset with a model document.
    Predict(PredictArgs),
    /// Score predictions against true targets.
    Evaluate(EvaluateArgs),
    /// Run generate, sobol, train, predict, and evaluate for all models.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Binary,
    Multilevel,
    Regression,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Binary => Task::Binary,
            TaskArg::Multilevel => Task::Multilevel,
            TaskArg::Regression => Task::Regression,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Traffic,
    Fire,
}

#[derive(Clone, Copy, ValueEnum)]
enum CalibrationArg {
    None,
    EvenSplit,
}

impl From<CalibrationArg> for CalibrationMode {
    fn from(c: CalibrationArg) -> CalibrationMode {
        match c {
            CalibrationArg::None => CalibrationMode::None,
            CalibrationArg::EvenSplit => CalibrationMode::EvenSplit,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantileRuleArg {
    /// Empirical percentile of the calibration scores: ceil(n(1-a)).
    Paper,
    /// Finite-sample rule: ceil((n+1)(1-a)).
    #[value(name = "n-plus-1")]
    NPlus1,
}

impl From<QuantileRuleArg> for QuantileRule {
    fn from(q: QuantileRuleArg) -> QuantileRule {
        match q {
            QuantileRuleArg::Paper => QuantileRule::EmpiricalPercentile,
            QuantileRuleArg::NPlus1 => QuantileRule::FiniteSample,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKindArg {
    #[value(name = "ml_cp")]
    MlCp,
    Npm,
    Ipm,
}

impl From<ModelKindArg> for ModelKind {
    fn from(m: ModelKindArg) -> ModelKind {
        match m {
            ModelKindArg::MlCp => ModelKind::MlCp,
            ModelKindArg::Npm => ModelKind::Npm,
            ModelKindArg::Ipm => ModelKind::Ipm,
        }
    }
}

fn parse_max_features(s: &str) -> std::result::Result<MaxFeatures, String> {
    match s {
        "all" => Ok(MaxFeatures::All),
        "sqrt" => Ok(MaxFeatures::Sqrt),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|f| *f > 0.0 && *f <= 1.0)
            .map(MaxFeatures::Fraction)
            .ok_or_else(|| {
                format!("expected `all`, `sqrt`, or a fraction in (0,1], got `{other}`")
            }),
    }
}

/// Run-config selection shared by sobol/train/run: a JSON config file,
/// overridden field by field with flags.
#[derive(Args)]
struct ConfigArgs {
    /// Run-config JSON file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthetic data source.
    #[arg(long, value_enum)]
    data: Option<DatasetArg>,
    /// CSV data source (requires --config carrying the schema).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Synthetic dataset size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Master seed; all stage seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Significance level (miscoverage rate).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, value_enum)]
    calibration: Option<CalibrationArg>,
    /// Base sample count N of the screening design (N(d+2) evaluations).
    #[arg(long)]
    sobol_n: Option<usize>,
    /// Total-index threshold for feature selection.
    #[arg(long)]
    sobol_threshold: Option<f64>,
    /// Explicit screening seed (otherwise derived from --seed).
    #[arg(long)]
    sobol_seed: Option<u64>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_samples_split: Option<usize>,
    /// Candidate features per split: all, sqrt, or a fraction.
    #[arg(long, value_parser = parse_max_features)]
    max_features: Option<MaxFeatures>,
    /// Grow each tree on the full training set instead of a bootstrap.
    #[arg(long)]
    no_bootstrap: bool,
    /// Difficulty-model neighbor count.
    #[arg(long)]
    k: Option<usize>,
    /// Residual smoothing added inside the difficulty transform.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    quantile_rule: Option<QuantileRuleArg>,
    /// z-score features before kNN distances.
    #[arg(long)]
    knn_scale: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let task = self
                    .task
                    .map(Task::from)
                    .or(matches!(self.data, Some(DatasetArg::Fire)).then_some(Task::Binary))
                    .ok_or_else(|| Error::InvalidParam("--task is required".into()))?;
                let n = self.n.unwrap_or(6000);
                match (self.data, &self.csv) {
                    (Some(DatasetArg::Traffic), None) => {
                        RunConfig::synthetic_traffic(n, task, self.seed.unwrap_or(0))
                    }
                    (Some(DatasetArg::Fire), None) => {
                        RunConfig::synthetic_fire(n, self.seed.unwrap_or(0))
                    }
                    (None, Some(_)) => {
                        return Err(Error::InvalidParam(
                            "a csv source needs --config carrying its schema".into(),
                        ))
                    }
                    _ => {
                        return Err(Error::InvalidParam(
                            "pick a data source: --data traffic|fire, or --csv with --config"
                                .into(),
                        ))
                    }
                }
            }
        };
        if let Some(path) = &self.csv {
            config.data = DataSource::Csv {
                path: path.to_string_lossy().into_owned(),
            };
        }
        if let Some(task) = self.task {
            config.task = task.into();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(f) = self.test_fraction {
            config.split.test_fraction = f;
        }
        if let Some(c) = self.calibration {
            config.split.calibration_mode = c.into();
        }
        if let Some(n) = self.sobol_n {
            config.sobol.n = n;
        }
        if let Some(t) = self.sobol_threshold {
            config.sobol.threshold = t;
        }
        if let Some(s) = self.sobol_seed {
            config.sobol.seed = Some(s);
        }
        if let Some(n) = self.n_trees {
            config.forest.n_trees = n;
        }
        if let Some(d) = self.max_depth {
            config.forest.max_depth = Some(d);
        }
        if let Some(m) = self.min_samples_split {
            config.forest.min_samples_split = m;
        }
        if let Some(mf) = self.max_features {
            config.forest.max_features = mf;
        }
        if self.no_bootstrap {
            config.forest.bootstrap = false;
        }
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(b) = self.beta {
            config.beta = b;
        }
        if let Some(q) = self.quantile_rule {
            config.quantile_rule = q.into();
        }
        if self.knn_scale {
            config.knn_scale = true;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output CSV path; a `<file>.meta.json` sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SobolArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory for sobol.json, sobol.tsv, selected_features.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Feature names the conformal model consumes (default: all).
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// JSON array of feature names, as written by `sobol`.
    #[arg(long)]
    features_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ml_cp")]
    model_kind: ModelKindArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input CSV; its columns must match the model's training schema.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.03)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// CSV holding the true targets for the predicted rows.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Target column in the truth file (default: last column).
    #[arg(long)]
    target: Option<String>,
    /// Attach published reference rows for a task key.
    #[arg(long, value_parser = ["traffic_binary", "traffic_multilevel", "traffic_regression", "fire_binary"])]
    compare: Option<String>,
    #[arg(long, value_enum)]
    model_kind: Option<ModelKindArg>,
    #[arg(long, default_value_t = 0.03)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run directory (default: `$EVCP_OUTPUT_ROOT/run-<fingerprint>`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let data = load_dataset(&config)?;
    let fingerprint = data.fingerprint();
    write_csv_artifact(
        &args.out,
        &data.to_csv_bytes(),
        &ArtifactMeta {
            config_fingerprint: config.fingerprint(),
            dataset_fingerprint: Some(fingerprint.clone()),
            n_rows: data.n_rows(),
            model_kind: None,
        },
    )?;
    println!(
        "wrote {} ({} rows, fingerprint {})",
        args.out.display(),
        data.n_rows(),
        &fingerprint[..12]
    );
    Ok(())
}

fn cmd_sobol(args: &SobolArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let data = load_dataset(&config)?;
    let report = run_sobol(&config, &data)?;
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(
        args.out_dir.join("sobol.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(args.out_dir.join("sobol.tsv"), report.to_tsv())?;
    std::fs::write(
        args.out_dir.join("selected_features.json"),
        serde_json::to_string_pretty(&report.selected_features)?,
    )?;
    for i in 0..report.features.len() {
        println!(
            "{}\ts1={:.4}\tst={:.4}",
            report.features[i], report.s1[i], report.st[i]
        );
    }
    println!("selected: {}", report.selected_features.join(", "));
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let data = load_dataset(&config)?;
    let features = match (&args.features, &args.features_file) {
        (Some(names), _) => names.clone(),
        (None, Some(path)) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        (None, None) => data.schema.feature_names.clone(),
    };
    let doc = evcp_core::pipeline::train_model(&config, &data, &features, args.model_kind.into())?;
    doc.save(&args.out)?;
    println!(
        "wrote {} ({} on features [{}])",
        args.out.display(),
        doc.model_kind.as_str(),
        doc.selected_features.join(", ")
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let doc = ModelDocument::load(&args.model)?;
    let data = load_csv(&args.data, &doc.schema).map_err(|e| match e {
        Error::MissingColumn(c) => {
            Error::SchemaMismatch(format!("dataset lacks model column `{c}`"))
        }
        other => other,
    })?;
    if let (Some(expected), Some(meta)) = (&doc.config_fingerprint, read_artifact_meta(&args.data))
    {
        check_fingerprints(expected, Some(&meta.config_fingerprint))?;
    }
    let records = evcp_core::pipeline::predict_with_document(&doc, &data, args.alpha)?;
    let task = Task::from_target_kind(&doc.schema.target_kind);
    write_csv_artifact(
        &args.out,
        predictions_to_csv(task, &records).as_bytes(),
        &ArtifactMeta {
            config_fingerprint: doc.config_fingerprint.clone().unwrap_or_default(),
            dataset_fingerprint: Some(data.fingerprint()),
            n_rows: records.len(),
            model_kind: Some(doc.model_kind),
        },
    )?;
    println!("wrote {} ({} rows)", args.out.display(), records.len());
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let pred_text = std::fs::read_to_string(&args.predictions)?;
    let records = predictions_from_csv(&pred_text)?;
    let truth_bytes = std::fs::read(&args.truth)?;
    let y_true = read_target_column(&args.truth, args.target.as_deref())?;

    let pred_meta = read_artifact_meta(&args.predictions);
    let truth_meta = read_artifact_meta(&args.truth);
    if let (Some(p), Some(t)) = (&pred_meta, &truth_meta) {
        if !p.config_fingerprint.is_empty() && !t.config_fingerprint.is_empty() {
            check_fingerprints(&p.config_fingerprint, Some(&t.config_fingerprint))?;
        }
    }

    let task: Task = args.task.into();
    let metrics = evaluate_records(&records, &y_true, task)?;
    let model_kind = args
        .model_kind
        .map(ModelKind::from)
        .or(pred_meta.and_then(|m| m.model_kind))
        .unwrap_or(ModelKind::MlCp);

    // Context echoed into the report; the run subcommand fills it from
    // its config, here it comes from the flags and the sidecar metadata.
    let mut config = RunConfig::synthetic_traffic(100, task, args.seed);
    config.alpha = args.alpha;
    let mut report = evaluation_report(
        &config,
        model_kind,
        metrics,
        sha256_hex(&truth_bytes),
        args.compare.as_deref(),
    );
    report.config = ReportContext {
        alpha: args.alpha,
        seed: args.seed,
        split: config.split,
    };
    report.config_fingerprint = read_artifact_meta(&args.predictions)
        .map(|m| m.config_fingerprint)
        .unwrap_or_default();
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json)?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let out_dir = match &args.out_dir {
        Some(dir) => dir.clone(),
        None => {
            let root = std::env::var_os("EVCP_OUTPUT_ROOT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            root.join(format!("run-{}", &config.fingerprint()[..12]))
        }
    };
    let summary = run_experiment(&config, &out_dir)?;
    print!("{}", summary.render_table());
    println!("run directory: {}", out_dir.display());
    Ok(())
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Sobol(args) => cmd_sobol(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Run(args) => cmd_run(args),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
