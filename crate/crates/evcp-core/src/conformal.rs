//! Normalized inductive conformal regression.
//!
//! A fitted forest provides point predictions; a kNN difficulty model
//! trained on log-residuals provides a per-point scale `sigma(x)`;
//! held-out calibration scores `|y - yhat| / sigma(x)` provide the
//! distribution the interval quantile is cut from. Intervals are
//! symmetric about the point prediction:
//!
//! ```text
//! [yhat - q * sigma(x), yhat + q * sigma(x)]
//! ```

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, Forest, ForestParams};
use crate::knn::{fit_knn_with_scaling, KnnModel};

/// Difficulty model: kNN over training inputs with targets
/// `ln(|residual| + beta)`, mapped back through `exp` so the scale stays
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub difficulty_model: KnnModel,
    pub beta: f64,
}

impl Normalizer {
    /// Per-point nonconformity scale; always positive.
    pub fn sigma(&self, x: &[f64]) -> Result<f64> {
        Ok(self.difficulty_model.predict(x)?.exp() + self.beta)
    }
}

/// Ascending-sorted nonconformity scores from the calibration partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub scores: Vec<f64>,
}

impl CalibrationTable {
    pub fn new(mut scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyCalibrationSet);
        }
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::NonFiniteInput);
        }
        scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Which order statistic of the calibration table backs the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum QuantileRule {
    /// The ceil(n(1-alpha))-th of n sorted scores: the plain empirical
    /// percentile (500 scores at alpha = 0.1 select the 450th).
    #[default]
    #[serde(rename = "paper")]
    EmpiricalPercentile,
    /// The ceil((n+1)(1-alpha))-th score, which carries the exact
    /// finite-sample coverage guarantee.
    #[serde(rename = "n-plus-1")]
    FiniteSample,
}

/// Symmetric prediction interval at significance `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lo: f64,
    pub hi: f64,
    pub alpha: f64,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// Inductive conformal regressor: underlying forest, difficulty
/// normalizer, and (once calibrated) the score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpModel {
    pub underlying: Forest,
    pub normalizer: Normalizer,
    pub calibration: Option<CalibrationTable>,
    pub quantile_rule: QuantileRule,
}

/// Options beyond the core fit arguments.
#[derive(Debug, Clone, Copy, Default)]
pub struct IcpOptions {
    pub quantile_rule: QuantileRule,
    /// z-score features before kNN distances.
    pub knn_scale: bool,
}

/// Fit the underlying forest and the difficulty model on the training
/// partition. The returned model still needs [`calibrate_icp`].
pub fn fit_icp(
    train: &Dataset,
    forest_params: &ForestParams,
    k: usize,
    beta: f64,
) -> Result<IcpModel> {
    fit_icp_with(train, forest_params, k, beta, IcpOptions::default())
}

/// See [`fit_icp`].
pub fn fit_icp_with(
    train: &Dataset,
    forest_params: &ForestParams,
    k: usize,
    beta: f64,
    options: IcpOptions,
) -> Result<IcpModel> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParam(format!("beta {beta} must be > 0")));
    }
    let forest = fit_forest(&train.x, &train.y, forest_params)?;
    let log_residuals: Vec<f64> = train
        .x
        .rows_iter()
        .zip(&train.y)
        .map(|(row, &y)| Ok(((y - forest.predict(row)?).abs() + beta).ln()))
        .collect::<Result<_>>()?;
    let difficulty_model = fit_knn_with_scaling(&train.x, &log_residuals, k, options.knn_scale)?;
    Ok(IcpModel {
        underlying: forest,
        normalizer: Normalizer {
            difficulty_model,
            beta,
        },
        calibration: None,
        quantile_rule: options.quantile_rule,
    })
}

/// Score the calibration partition and attach the sorted table.
///
/// The underlying forest is never refit here; calibration only observes
/// its residuals on held-out rows.
pub fn calibrate_icp(model: IcpModel, cal: &Dataset) -> Result<IcpModel> {
    if cal.n_rows() == 0 {
        return Err(Error::EmptyCalibrationSet);
    }
    let scores: Vec<f64> = cal
        .x
        .rows_iter()
        .zip(&cal.y)
        .map(|(row, &y)| {
            let residual = (y - model.underlying.predict(row)?).abs();
            Ok(residual / model.normalizer.sigma(row)?)
        })
        .collect::<Result<_>>()?;
    Ok(IcpModel {
        calibration: Some(CalibrationTable::new(scores)?),
        ..model
    })
}

/// Ceiling that first snaps values within 1e-9 of an integer, so exact
/// rational products like 500 * 0.9 land on the integer they denote.
fn ceil_index(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// Score at the rule's order statistic, 1-based index clipped to [1, n].
pub fn quantile_cutoff(table: &CalibrationTable, alpha: f64, rule: QuantileRule) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParam(format!(
            "alpha {alpha} must be in (0, 1)"
        )));
    }
    let n = table.len();
    let count = match rule {
        QuantileRule::EmpiricalPercentile => n as f64,
        QuantileRule::FiniteSample => (n + 1) as f64,
    };
    let idx = ceil_index(count * (1.0 - alpha)).clamp(1, n);
    Ok(table.scores[idx - 1])
}

impl IcpModel {
    pub fn is_calibrated(&self) -> bool {
        self.calibration.is_some()
    }

    /// Point prediction of the underlying forest.
    pub fn point(&self, x: &[f64]) -> Result<f64> {
        self.underlying.predict(x)
    }

    /// Interval `[yhat - q sigma, yhat + q sigma]` at significance `alpha`.
    pub fn predict_interval(&self, x: &[f64], alpha: f64) -> Result<PredictionInterval> {
        let table = self.calibration.as_ref().ok_or(Error::NotCalibrated)?;
        let q = quantile_cutoff(table, alpha, self.quantile_rule)?;
        let point = self.underlying.predict(x)?;
        let sigma = self.normalizer.sigma(x)?;
        Ok(PredictionInterval {
            lo: point - q * sigma,
            hi: point + q * sigma,
            alpha,
        })
    }
}

/// See [`IcpModel::predict_interval`]; free-function form.
pub fn predict_interval(model: &IcpModel, x: &[f64], alpha: f64) -> Result<PredictionInterval> {
    model.predict_interval(x, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSchema, TargetKind};
    use crate::forest::{Forest, RegressionTree, TrainingFingerprint, TreeNode};
    use crate::knn::fit_knn;
    use crate::matrix::Matrix;

    fn dataset(rows: &[Vec<f64>], y: &[f64]) -> Dataset {
        let names = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
        let schema = ColumnSchema::new(names, "y", TargetKind::Regression).unwrap();
        Dataset::new(schema, Matrix::from_rows(rows).unwrap(), y.to_vec()).unwrap()
    }

    fn exact_fit_params() -> ForestParams {
        ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..ForestParams::default()
        }
    }

    /// Model with a constant point prediction and sigma identically 1.
    fn unit_sigma_model(point: f64) -> IcpModel {
        let beta = 0.25;
        let x_ref = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let difficulty = fit_knn(&x_ref, &[(1.0f64 - beta).ln()], 1).unwrap();
        IcpModel {
            underlying: Forest {
                trees: vec![RegressionTree {
                    nodes: vec![TreeNode::Leaf { value: point }],
                }],
                params: exact_fit_params(),
                fingerprint: TrainingFingerprint {
                    n_rows: 1,
                    n_features: 1,
                    seed: 0,
                },
            },
            normalizer: Normalizer {
                difficulty_model: difficulty,
                beta,
            },
            calibration: None,
            quantile_rule: QuantileRule::EmpiricalPercentile,
        }
    }

    #[test]
    fn zero_residual_training_makes_sigma_twice_beta() {
        // A one-tree full-depth forest reproduces distinct training rows
        // exactly, so every log-residual target is ln(beta) and
        // sigma = exp(ln(beta)) + beta = 2 beta.
        let beta = 0.01;
        let d = dataset(
            &[vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            &[0.0, 1.0, 4.0, 9.0],
        );
        let m = fit_icp(&d, &exact_fit_params(), 1, beta).unwrap();
        for row in d.x.rows_iter() {
            let s = m.normalizer.sigma(row).unwrap();
            assert!((s - 2.0 * beta).abs() < 1e-15, "sigma {s}");
        }
    }

    #[test]
    fn single_row_training_set() {
        let d = dataset(&[vec![5.0]], &[3.0]);
        let m = fit_icp(&d, &exact_fit_params(), 1, 0.01).unwrap();
        assert_eq!(m.point(&[5.0]).unwrap(), 3.0);
        assert_eq!(m.normalizer.difficulty_model.y_ref, vec![0.01f64.ln()]);
    }

    #[test]
    fn difficulty_targets_match_hand_computed_log_residuals() {
        // Recompute ln(|y - yhat| + beta) from the fitted forest by an
        // independent pass and compare to what the kNN stored.
        let d =
            crate::data::generate_synthetic_traffic(120, 5, crate::data::TrafficTask::Regression)
                .unwrap()
                .select_rows(&(0..20).collect::<Vec<_>>());
        let beta = 0.01;
        let params = ForestParams {
            n_trees: 10,
            seed: 3,
            ..ForestParams::default()
        };
        let m = fit_icp(&d, &params, 5, beta).unwrap();
        for (i, row) in d.x.rows_iter().enumerate() {
            let expect = ((d.y[i] - m.underlying.predict(row).unwrap()).abs() + beta).ln();
            assert_eq!(m.normalizer.difficulty_model.y_ref[i], expect);
        }
    }

    #[test]
    fn calibration_scores_from_unit_sigma() {
        // Point prediction 0, sigma = 1: scores are the raw residuals.
        let m = unit_sigma_model(0.0);
        let cal = dataset(&[vec![0.0], vec![0.0]], &[2.0, 1.0]);
        let m = calibrate_icp(m, &cal).unwrap();
        assert_eq!(m.calibration.as_ref().unwrap().scores, vec![1.0, 2.0]);
    }

    #[test]
    fn calibration_point_on_prediction_scores_zero() {
        let m = unit_sigma_model(7.0);
        let cal = dataset(&[vec![0.0]], &[7.0]);
        let m = calibrate_icp(m, &cal).unwrap();
        assert_eq!(m.calibration.as_ref().unwrap().scores, vec![0.0]);
    }

    #[test]
    fn calibration_matches_independent_recomputation_via_serde() {
        let d =
            crate::data::generate_synthetic_traffic(200, 17, crate::data::TrafficTask::Regression)
                .unwrap();
        let train = d.select_rows(&(0..100).collect::<Vec<_>>());
        let cal = d.select_rows(&(100..110).collect::<Vec<_>>());
        let params = ForestParams {
            n_trees: 12,
            seed: 1,
            ..ForestParams::default()
        };
        let m = fit_icp(&train, &params, 5, 0.01).unwrap();
        let m = calibrate_icp(m, &cal).unwrap();

        // Round-trip the model document and recompute every score.
        let json = serde_json::to_string(&m).unwrap();
        let back: IcpModel = serde_json::from_str(&json).unwrap();
        let mut scores: Vec<f64> = (0..cal.n_rows())
            .map(|i| {
                let row = cal.x.row(i);
                (cal.y[i] - back.underlying.predict(row).unwrap()).abs()
                    / back.normalizer.sigma(row).unwrap()
            })
            .collect();
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(m.calibration.as_ref().unwrap().scores, scores);
    }

    #[test]
    fn quantile_worked_examples() {
        let table = CalibrationTable::new((1..=500).map(f64::from).collect()).unwrap();
        // 500 sorted scores at alpha = 0.1: the 450th.
        assert_eq!(
            quantile_cutoff(&table, 0.1, QuantileRule::EmpiricalPercentile).unwrap(),
            450.0
        );
        // Finite-sample rule: ceil(501 * 0.9) = 451.
        assert_eq!(
            quantile_cutoff(&table, 0.1, QuantileRule::FiniteSample).unwrap(),
            451.0
        );
        let ten = CalibrationTable::new((1..=10).map(f64::from).collect()).unwrap();
        assert_eq!(
            quantile_cutoff(&ten, 0.5, QuantileRule::EmpiricalPercentile).unwrap(),
            5.0
        );
    }

    #[test]
    fn quantile_index_clipping() {
        let table = CalibrationTable::new(vec![3.0, 1.0, 2.0]).unwrap();
        // alpha close to 1 clips to the smallest score.
        assert_eq!(
            quantile_cutoff(&table, 0.999, QuantileRule::EmpiricalPercentile).unwrap(),
            1.0
        );
        // alpha close to 0 clips to the largest.
        assert_eq!(
            quantile_cutoff(&table, 1e-9, QuantileRule::FiniteSample).unwrap(),
            3.0
        );
    }

    #[test]
    fn degenerate_calibration_gives_degenerate_interval() {
        let m = unit_sigma_model(10.0);
        let cal = dataset(&[vec![0.0], vec![1.0]], &[10.0, 10.0]);
        let m = calibrate_icp(m, &cal).unwrap();
        let iv = m.predict_interval(&[0.5], 0.25).unwrap();
        assert_eq!((iv.lo, iv.hi), (10.0, 10.0));
    }

    #[test]
    fn interval_arithmetic_from_contract() {
        // Point 10, q = 2, sigma = 1.5 -> [7, 13].
        let mut m = unit_sigma_model(10.0);
        let beta = m.normalizer.beta;
        // Make sigma = 1.5 by retuning the stored difficulty target.
        m.normalizer.difficulty_model.y_ref = vec![(1.5f64 - beta).ln()];
        m.calibration = Some(CalibrationTable::new(vec![2.0, 2.0]).unwrap());
        let iv = m.predict_interval(&[0.0], 0.5).unwrap();
        assert!((iv.lo - 7.0).abs() < 1e-12);
        assert!((iv.hi - 13.0).abs() < 1e-12);
        // Midpoint equals the point prediction.
        assert!(((iv.lo + iv.hi) / 2.0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn uncalibrated_prediction_is_rejected() {
        let m = unit_sigma_model(0.0);
        assert!(matches!(
            m.predict_interval(&[0.0], 0.1),
            Err(Error::NotCalibrated)
        ));
    }

    #[test]
    fn empty_calibration_rejected() {
        assert!(matches!(
            CalibrationTable::new(vec![]),
            Err(Error::EmptyCalibrationSet)
        ));
    }
}
