//! k-nearest-neighbor regressor, used as the conformal difficulty model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-feature z-score transform, optionally applied before distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl FeatureScaling {
    fn fit(x: &Matrix) -> Self {
        let n = x.n_rows() as f64;
        let d = x.n_cols();
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for j in 0..d {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means[j] = mean;
            // Constant features scale to zero offset rather than dividing by 0.
            stds[j] = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { means, stds }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(self.means.iter().zip(&self.stds))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }
}

/// Stored-data kNN regressor: prediction is the unweighted mean target of
/// the `min(k, n)` nearest rows by Euclidean distance, ties broken by the
/// lower stored row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x_ref: Matrix,
    pub y_ref: Vec<f64>,
    #[serde(default)]
    pub scaling: Option<FeatureScaling>,
}

/// Store the training data verbatim.
pub fn fit_knn(x: &Matrix, y: &[f64], k: usize) -> Result<KnnModel> {
    fit_knn_with_scaling(x, y, k, false)
}

/// As [`fit_knn`], optionally z-scoring features before distances.
pub fn fit_knn_with_scaling(x: &Matrix, y: &[f64], k: usize, scale: bool) -> Result<KnnModel> {
    if k < 1 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    if x.n_rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    Ok(KnnModel {
        k,
        x_ref: x.clone(),
        y_ref: y.to_vec(),
        scaling: scale.then(|| FeatureScaling::fit(x)),
    })
}

impl KnnModel {
    pub fn n_features(&self) -> usize {
        self.x_ref.n_cols()
    }

    /// Mean target over the `min(k, n)` nearest stored rows.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.x_ref.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.x_ref.n_cols(),
                got: x.len(),
            });
        }
        let neighbors = self.nearest(x);
        let sum: f64 = neighbors.iter().map(|&i| self.y_ref[i]).sum();
        Ok(sum / neighbors.len() as f64)
    }

    /// Indices of the `min(k, n)` nearest rows, nearest first.
    pub fn nearest(&self, x: &[f64]) -> Vec<usize> {
        let mut query = x.to_vec();
        let mut scaled_row = Vec::new();
        if let Some(scaling) = &self.scaling {
            let mut out = Vec::new();
            scaling.apply(x, &mut out);
            query = out;
        }
        let mut dist_idx: Vec<(f64, usize)> = (0..self.x_ref.n_rows())
            .map(|i| {
                let row = self.x_ref.row(i);
                let row = if let Some(scaling) = &self.scaling {
                    scaling.apply(row, &mut scaled_row);
                    scaled_row.as_slice()
                } else {
                    row
                };
                let d2: f64 = row.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let take = self.k.min(dist_idx.len());
        dist_idx.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        dist_idx[..take].iter().map(|&(_, i)| i).collect()
    }
}

/// See [`KnnModel::predict`]; free-function form.
pub fn predict_knn(model: &KnnModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}
