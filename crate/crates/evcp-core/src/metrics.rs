//! Classification, regression, and interval-quality metrics.
//!
//! Ratios with zero denominators are reported as `None` and serialize to
//! explicit JSON nulls; they are never coerced to 0 or NaN.

use serde::{Deserialize, Serialize};

use crate::conformal::PredictionInterval;
use crate::data::TargetKind;
use crate::error::{Error, Result};

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl ConfusionCounts {
    /// Counts with class 1 as positive.
    pub fn from_binary(y_true: &[f64], y_pred: &[f64]) -> Self {
        let mut c = ConfusionCounts {
            tp: 0,
            fn_: 0,
            tn: 0,
            fp: 0,
        };
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == 1.0, p == 1.0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
            }
        }
        c
    }

    /// One-vs-rest counts for `class` within a multiclass labeling.
    pub fn one_vs_rest(y_true: &[f64], y_pred: &[f64], class: usize) -> Self {
        let c = class as f64;
        let mut counts = ConfusionCounts {
            tp: 0,
            fn_: 0,
            tn: 0,
            fp: 0,
        };
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == c, p == c) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
                (false, true) => counts.fp += 1,
            }
        }
        counts
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean of precision and recall; `None` when their sum is zero
/// or either input is undefined.
pub fn f_measure(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    if p + r == 0.0 {
        return None;
    }
    Some(2.0 * p * r / (p + r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_measure: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub r2: Option<f64>,
    pub mae: f64,
    pub mse: f64,
    pub medae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    pub coverage: f64,
    pub mean_width: f64,
}

/// Metrics for one evaluation; only the groups relevant to the task are
/// present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TargetKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervals: Option<IntervalMetrics>,
}

impl MetricsReport {
    fn empty(task: TargetKind) -> Self {
        Self {
            task,
            classification: None,
            regression: None,
            intervals: None,
        }
    }
}

/// How multiclass ratios are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Pool one-vs-rest counts, then apply the ratio formulas once.
    Micro,
    /// Apply the formulas per class, then average the ratios.
    Macro,
}

fn check_labels(y: &[f64], n_classes: usize) -> Result<()> {
    for &v in y {
        if v.fract() != 0.0 || v < 0.0 || v >= n_classes as f64 {
            return Err(Error::InvalidParam(format!(
                "label {v} is not a class index below {n_classes}"
            )));
        }
    }
    Ok(())
}

/// Classification metrics; two classes use the plain binary confusion
/// formulas with class 1 positive, more classes micro-average pooled
/// one-vs-rest counts.
pub fn classification_metrics(
    y_true: &[f64],
    y_pred: &[f64],
    n_classes: usize,
) -> Result<MetricsReport> {
    classification_metrics_with(y_true, y_pred, n_classes, Averaging::Micro)
}

/// See [`classification_metrics`]; explicit multiclass averaging choice.
pub fn classification_metrics_with(
    y_true: &[f64],
    y_pred: &[f64],
    n_classes: usize,
    averaging: Averaging,
) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_labels(y_true, n_classes)?;
    check_labels(y_pred, n_classes)?;

    let task = if n_classes == 2 {
        TargetKind::Binary
    } else {
        TargetKind::Multiclass { n_classes }
    };
    let metrics = if n_classes == 2 {
        let c = ConfusionCounts::from_binary(y_true, y_pred);
        let sensitivity = c.sensitivity();
        let precision = c.precision();
        ClassificationMetrics {
            accuracy: c.accuracy(),
            sensitivity,
            specificity: c.specificity(),
            precision,
            recall: sensitivity,
            f_measure: f_measure(precision, sensitivity),
        }
    } else {
        let per_class: Vec<ConfusionCounts> = (0..n_classes)
            .map(|c| ConfusionCounts::one_vs_rest(y_true, y_pred, c))
            .collect();
        let correct = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count();
        let accuracy = ratio(correct, y_true.len());
        match averaging {
            Averaging::Micro => {
                let pooled = per_class.iter().fold(
                    ConfusionCounts {
                        tp: 0,
                        fn_: 0,
                        tn: 0,
                        fp: 0,
                    },
                    |acc, c| ConfusionCounts {
                        tp: acc.tp + c.tp,
                        fn_: acc.fn_ + c.fn_,
                        tn: acc.tn + c.tn,
                        fp: acc.fp + c.fp,
                    },
                );
                let sensitivity = pooled.sensitivity();
                let precision = pooled.precision();
                ClassificationMetrics {
                    accuracy,
                    sensitivity,
                    specificity: pooled.specificity(),
                    precision,
                    recall: sensitivity,
                    f_measure: f_measure(precision, sensitivity),
                }
            }
            Averaging::Macro => {
                let avg = |f: &dyn Fn(&ConfusionCounts) -> Option<f64>| -> Option<f64> {
                    let vals: Option<Vec<f64>> = per_class.iter().map(f).collect();
                    vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
                };
                let sensitivity = avg(&ConfusionCounts::sensitivity);
                let precision = avg(&ConfusionCounts::precision);
                ClassificationMetrics {
                    accuracy,
                    sensitivity,
                    specificity: avg(&ConfusionCounts::specificity),
                    precision,
                    recall: sensitivity,
                    f_measure: f_measure(precision, sensitivity),
                }
            }
        }
    };
    Ok(MetricsReport {
        classification: Some(metrics),
        ..MetricsReport::empty(task)
    })
}

/// R^2, mean absolute/squared error, and median absolute error.
pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    let abs_errors: Vec<f64> = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).abs())
        .collect();

    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    let mae = abs_errors.iter().sum::<f64>() / n;
    let mse = ss_res / n;
    let medae = median(abs_errors);

    Ok(MetricsReport {
        regression: Some(RegressionMetrics {
            r2,
            mae,
            mse,
            medae,
        }),
        ..MetricsReport::empty(TargetKind::Regression)
    })
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Empirical coverage and mean width of prediction intervals.
pub fn interval_metrics(intervals: &[PredictionInterval], y_true: &[f64]) -> Result<MetricsReport> {
    if intervals.len() != y_true.len() {
        return Err(Error::LengthMismatch {
            left: intervals.len(),
            right: y_true.len(),
        });
    }
    if intervals.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = intervals.len() as f64;
    let covered = intervals
        .iter()
        .zip(y_true)
        .filter(|(iv, &y)| iv.contains(y))
        .count();
    let mean_width = intervals.iter().map(PredictionInterval::width).sum::<f64>() / n;
    Ok(MetricsReport {
        intervals: Some(IntervalMetrics {
            coverage: covered as f64 / n,
            mean_width,
        }),
        ..MetricsReport::empty(TargetKind::Regression)
    })
}
