//! Reference probabilistic models NPM and IPM.
//!
//! NPM scores features under unit-variance Gaussians; IPM replaces the
//! unit scales with sensor-derived ones (a tenth of the per-feature
//! training standard deviation). Both are reproduced exactly as
//! specified, including the regression fit statistic mean(y * x_i); they
//! are comparison references, not models to improve.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-class feature means under fixed (not fitted) per-feature scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassBaseline {
    /// `means[class][feature]`
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<f64>,
}

/// Regressor with `means[i] = mean(y * x_i)` and precision weights from
/// fixed per-feature scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMeanRegressor {
    pub means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

/// NPM's scale vector: all ones.
pub fn npm_stds(n_features: usize) -> Vec<f64> {
    vec![1.0; n_features]
}

/// IPM's scale vector: 0.1 times the per-feature sample standard
/// deviation of the training features.
pub fn derive_ipm_stds(train: &Dataset) -> Result<Vec<f64>> {
    let n = train.n_rows();
    if n < 2 {
        return Err(Error::InvalidParam(
            "ipm stds need at least 2 training rows".into(),
        ));
    }
    (0..train.n_features())
        .map(|j| {
            let col = train.x.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
            let std = var.sqrt();
            if std > 0.0 {
                Ok(0.1 * std)
            } else {
                Err(Error::ZeroStd { feature: j })
            }
        })
        .collect()
}

/// Per-class feature means over rows carrying each label.
pub fn fit_gaussian_classifier(
    x: &Matrix,
    y: &[f64],
    stds: Vec<f64>,
) -> Result<GaussianClassBaseline> {
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    if x.n_rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if stds.len() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: x.n_cols(),
            got: stds.len(),
        });
    }
    if stds.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidParam("stds must be positive".into()));
    }
    let n_classes = y.iter().fold(0usize, |m, &v| m.max(v as usize + 1));
    let d = x.n_cols();
    let mut sums = vec![vec![0.0; d]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (i, &label) in y.iter().enumerate() {
        let c = label as usize;
        counts[c] += 1;
        for (j, &v) in x.row(i).iter().enumerate() {
            sums[c][j] += v;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(missing));
    }
    let means = sums
        .into_iter()
        .zip(&counts)
        .map(|(row, &c)| row.into_iter().map(|s| s / c as f64).collect())
        .collect();
    Ok(GaussianClassBaseline { means, stds })
}

fn log_normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * (2.0 * std::f64::consts::PI * std * std).ln() - 0.5 * z * z
}

impl GaussianClassBaseline {
    pub fn n_classes(&self) -> usize {
        self.means.len()
    }

    /// Summed per-feature Gaussian log-likelihood of `x` under one class.
    pub fn log_likelihood(&self, class: usize, x: &[f64]) -> f64 {
        self.means[class]
            .iter()
            .zip(&self.stds)
            .zip(x)
            .map(|((&m, &s), &v)| log_normal_pdf(v, m, s))
            .sum()
    }

    /// Most likely class; ties resolve to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.stds.len() {
            return Err(Error::DimensionMismatch {
                expected: self.stds.len(),
                got: x.len(),
            });
        }
        let mut best = (0usize, f64::NEG_INFINITY);
        for c in 0..self.n_classes() {
            let ll = self.log_likelihood(c, x);
            if ll > best.1 {
                best = (c, ll);
            }
        }
        Ok(best.0)
    }
}

/// See [`GaussianClassBaseline::predict`]; free-function form.
pub fn predict_gaussian_class(model: &GaussianClassBaseline, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

/// Fit statistic exactly as specified: `means[i]` = mean over rows of
/// `y * x_i`.
pub fn fit_weighted_regressor(
    x: &Matrix,
    y: &[f64],
    feature_stds: Vec<f64>,
) -> Result<WeightedMeanRegressor> {
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    if x.n_rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if feature_stds.len() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: x.n_cols(),
            got: feature_stds.len(),
        });
    }
    if feature_stds.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidParam("feature_stds must be positive".into()));
    }
    let n = x.n_rows() as f64;
    let d = x.n_cols();
    let mut means = vec![0.0; d];
    for (i, &yi) in y.iter().enumerate() {
        for (j, &v) in x.row(i).iter().enumerate() {
            means[j] += yi * v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    Ok(WeightedMeanRegressor {
        means,
        feature_stds,
    })
}

impl WeightedMeanRegressor {
    /// Precision-weighted ratio sum(x_i m_i w_i) / sum(x_i w_i) with
    /// w_i = 1 / std_i^2.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_stds.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_stds.len(),
                got: x.len(),
            });
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xi, &mi), &si) in x.iter().zip(&self.means).zip(&self.feature_stds) {
            let w = 1.0 / (si * si);
            num += xi * mi * w;
            den += xi * w;
        }
        if den == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(num / den)
    }
}

/// See [`WeightedMeanRegressor::predict`]; free-function form.
pub fn predict_weighted_regression(model: &WeightedMeanRegressor, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSchema, TargetKind};

    #[test]
    fn ipm_stds_are_a_tenth_of_feature_stds() {
        // Three rows {v-d, v, v+d} per feature give sample std exactly d.
        let spread = [7.0, 4.0, 10.0, 37.0];
        let center = [10.0, 20.0, 30.0, 40.0];
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|r| {
                (0..4)
                    .map(|j| center[j] + (r as f64 - 1.0) * spread[j])
                    .collect()
            })
            .collect();
        let schema = ColumnSchema::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            "y",
            TargetKind::Regression,
        )
        .unwrap();
        let d = Dataset::new(schema, Matrix::from_rows(&rows).unwrap(), vec![0.0; 3]).unwrap();
        let stds = derive_ipm_stds(&d).unwrap();
        for (got, want) in stds.iter().zip([0.7, 0.4, 1.0, 3.7]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        // NPM counterpart: the all-ones vector.
        assert_eq!(npm_stds(4), vec![1.0; 4]);
    }

    #[test]
    fn ipm_constant_feature_rejected() {
        let schema = ColumnSchema::new(vec!["a".into()], "y", TargetKind::Regression).unwrap();
        let x = Matrix::from_rows(&[vec![2.0], vec![2.0], vec![2.0]]).unwrap();
        let d = Dataset::new(schema, x, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            derive_ipm_stds(&d),
            Err(Error::ZeroStd { feature: 0 })
        ));
    }

    #[test]
    fn classifier_fit_means() {
        let x = Matrix::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let m = fit_gaussian_classifier(&x, &[0.0, 1.0], vec![1.0]).unwrap();
        assert_eq!(m.means, vec![vec![0.0], vec![10.0]]);

        // Single class: means are column means.
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0]]).unwrap();
        let m = fit_gaussian_classifier(&x, &[0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(m.means, vec![vec![2.0, 4.0]]);
    }

    #[test]
    fn classifier_fit_matches_hand_grouping() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![3.0, 2.0],
            vec![10.0, 5.0],
            vec![12.0, 7.0],
            vec![20.0, -1.0],
        ])
        .unwrap();
        let y = [0.0, 0.0, 1.0, 1.0, 2.0];
        let m = fit_gaussian_classifier(&x, &y, vec![1.0, 1.0]).unwrap();
        assert_eq!(
            m.means,
            vec![vec![2.0, 1.0], vec![11.0, 6.0], vec![20.0, -1.0]]
        );
    }

    #[test]
    fn classifier_missing_class_rejected() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(
            fit_gaussian_classifier(&x, &[0.0, 2.0], vec![1.0]),
            Err(Error::MissingClass(1))
        ));
    }

    #[test]
    fn classifier_prediction_prefers_nearer_mean() {
        let x = Matrix::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let m = fit_gaussian_classifier(&x, &[0.0, 1.0], vec![1.0]).unwrap();
        // |1 - 0| beats |1 - 10| under equal scales.
        assert_eq!(m.predict(&[1.0]).unwrap(), 0);
        // A class mean itself is a unique maximum.
        assert_eq!(m.predict(&[10.0]).unwrap(), 1);
        // Equidistant point: lowest class wins the tie.
        assert_eq!(m.predict(&[5.0]).unwrap(), 0);
    }

    #[test]
    fn log_likelihood_uses_exact_constant() {
        let x = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let m = fit_gaussian_classifier(&x, &[0.0], vec![2.0]).unwrap();
        // At the mean: -0.5 ln(2 pi sigma^2).
        let want = -0.5 * (2.0 * std::f64::consts::PI * 4.0).ln();
        assert!((m.log_likelihood(0, &[0.0]) - want).abs() < 1e-15);
    }

    #[test]
    fn regressor_fit_statistic_as_printed() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let m = fit_weighted_regressor(&x, &[2.0, 4.0], vec![1.0]).unwrap();
        // mean(2*1, 4*2) = 5.
        assert_eq!(m.means, vec![5.0]);

        let m = fit_weighted_regressor(&x, &[0.0, 0.0], vec![1.0]).unwrap();
        assert_eq!(m.means, vec![0.0]);

        let single = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let m = fit_weighted_regressor(&single, &[2.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(m.means, vec![6.0, 8.0]);
    }

    #[test]
    fn regressor_prediction() {
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let m = fit_weighted_regressor(&x, &[5.0], vec![1.0]).unwrap();
        assert_eq!(m.predict(&[1.0]).unwrap(), 5.0);
    }

    #[test]
    fn regressor_zero_denominator() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let m = fit_weighted_regressor(&x, &[1.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            m.predict(&[0.0, 0.0]),
            Err(Error::ZeroDenominator)
        ));
    }

    #[test]
    fn regressor_invariant_under_uniform_std_scaling() {
        let x = Matrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 5.0]]).unwrap();
        let y = [2.0, 4.0];
        let a = fit_weighted_regressor(&x, &y, vec![0.5, 2.0]).unwrap();
        let b = fit_weighted_regressor(&x, &y, vec![1.5, 6.0]).unwrap();
        let q = [0.7, 1.3];
        assert!((a.predict(&q).unwrap() - b.predict(&q).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn classifier_equals_nearest_mean_under_equal_stds() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![4.0, 1.0], vec![1.0, 5.0]]).unwrap();
        let m = fit_gaussian_classifier(&x, &[0.0, 1.0, 2.0], vec![2.0, 2.0]).unwrap();
        for q in [[0.5, 0.5], [3.0, 1.5], [1.0, 4.0], [2.0, 2.0]] {
            let by_ll = m.predict(&q).unwrap();
            let by_dist = m
                .means
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da: f64 = a.iter().zip(&q).map(|(m, v)| (m - v) * (m - v)).sum();
                    let db: f64 = b.iter().zip(&q).map(|(m, v)| (m - v) * (m - v)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .map(|(c, _)| c)
                .unwrap();
            assert_eq!(by_ll, by_dist);
        }
    }
}
