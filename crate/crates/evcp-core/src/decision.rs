//! Decision layer: convert prediction intervals into task outputs.
//!
//! Classification runs through regression intervals: the interval mean is
//! compared against class thresholds, and its fractional part drives a
//! confidence percentage. The confidence rule is a heuristic read of how
//! far the mean sits from a whole-number label, not a statistical
//! guarantee; the coverage guarantee lives in the interval itself.

use serde::{Deserialize, Serialize};

use crate::conformal::PredictionInterval;
use crate::error::{Error, Result};

/// Class label plus heuristic confidence percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub label: usize,
    pub confidence: f64,
}

/// Regression point output: interval midpoint and width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionPrediction {
    pub value: f64,
    pub width: f64,
}

/// Ascending class boundaries; label k covers means in
/// `(thresholds[k-1], thresholds[k]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub boundaries: Vec<f64>,
}

impl ClassThresholds {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(Error::InvalidParam("no class boundaries given".into()));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParam(
                "class boundaries must be strictly ascending".into(),
            ));
        }
        Ok(Self { boundaries })
    }

    /// Midpoints between consecutive integer labels: [0.5, 1.5, ...] for
    /// `n_classes` classes.
    pub fn integer_midpoints(n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidParam(
                "thresholds need at least 2 classes".into(),
            ));
        }
        Self::new((0..n_classes - 1).map(|i| i as f64 + 0.5).collect())
    }

    pub fn n_classes(&self) -> usize {
        self.boundaries.len() + 1
    }
}

/// Midpoint of the interval.
pub fn interval_mean(p: &PredictionInterval) -> f64 {
    (p.lo + p.hi) / 2.0
}

/// Confidence percent from the fractional part of the mean: 100 when the
/// mean sits within 0.1 of a whole label, otherwise the distance-derived
/// percentage. Negative inputs wrap the way a floored modulo does.
pub fn confidence_of(value: f64) -> f64 {
    let frac = value.rem_euclid(1.0);
    if frac < 0.1 {
        100.0
    } else if frac <= 0.5 {
        (1.0 - frac) * 100.0
    } else {
        frac * 100.0
    }
}

/// Binary label: 1 exactly when the mean exceeds 0.5.
pub fn binary_decision(mean: f64) -> LabeledPrediction {
    LabeledPrediction {
        label: usize::from(mean > 0.5),
        confidence: confidence_of(mean),
    }
}

/// Smallest class whose boundary the mean does not exceed; past every
/// boundary, the top class.
pub fn multiclass_decision(mean: f64, thresholds: &ClassThresholds) -> LabeledPrediction {
    let label = thresholds
        .boundaries
        .iter()
        .position(|&t| mean <= t)
        .unwrap_or(thresholds.boundaries.len());
    LabeledPrediction {
        label,
        confidence: confidence_of(mean),
    }
}

/// Interval midpoint and width, in target units.
pub fn regression_decision(p: &PredictionInterval) -> RegressionPrediction {
    RegressionPrediction {
        value: interval_mean(p),
        width: p.hi - p.lo,
    }
}
