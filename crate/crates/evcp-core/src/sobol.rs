//! Variance-based global sensitivity analysis over a black-box predictor.
//!
//! First-order indices use the Saltelli-2010 estimator, total indices the
//! Jansen estimator, both over a paired-matrix (A, B, AB_i) design with
//! N*(d+2) model evaluations. The paired matrices come from a Halton
//! sequence under a seeded Cranley-Patterson rotation, which keeps the
//! design deterministic per seed while converging much faster than plain
//! Monte Carlo. Feature selection keeps the inputs whose total index
//! clears a threshold.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::util::{pairwise_mean, pairwise_sum};

/// Per-feature sampling bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRange {
    pub bounds: Vec<(f64, f64)>,
}

impl InputRange {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidRange { feature: i });
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }
}

/// Paired-matrix design: base matrices A and B plus, per feature i, the
/// matrix AB_i that is A with column i taken from B.
#[derive(Debug, Clone)]
pub struct SaltelliSample {
    pub a: Matrix,
    pub b: Matrix,
    pub ab: Vec<Matrix>,
    pub n: usize,
}

impl SaltelliSample {
    /// Total model evaluations this design requires: N * (d + 2).
    pub fn n_evaluations(&self) -> usize {
        self.n * (self.ab.len() + 2)
    }
}

const HALTON_PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

/// Radical-inverse of `index` in the given prime base.
fn halton(base: u64, mut index: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut value = 0.0;
    while index > 0 {
        value += factor * (index % base) as f64;
        index /= base;
        factor *= inv;
    }
    value
}

/// Draw the paired design: A takes the first d Halton dimensions, B the
/// next d, each rotated by a seeded random shift and scaled to ranges.
/// Past 16 input dimensions the higher Halton bases correlate, so the
/// design falls back to seeded-uniform sampling.
pub fn saltelli_sample(ranges: &InputRange, n: usize, seed: u64) -> Result<SaltelliSample> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("sample size {n} must be >= 2")));
    }
    let d = ranges.dim();
    if d == 0 {
        return Err(Error::InvalidParam("no input ranges given".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Matrix::zeros(n, d);
    let mut b = Matrix::zeros(n, d);
    if 2 * d <= HALTON_PRIMES.len() {
        let shifts: Vec<f64> = (0..2 * d).map(|_| rng.random()).collect();
        for i in 0..n {
            for (j, &(lo, hi)) in ranges.bounds.iter().enumerate() {
                let ua = (halton(HALTON_PRIMES[j], (i + 1) as u64) + shifts[j]).fract();
                let ub = (halton(HALTON_PRIMES[d + j], (i + 1) as u64) + shifts[d + j]).fract();
                a.set(i, j, lo + ua * (hi - lo));
                b.set(i, j, lo + ub * (hi - lo));
            }
        }
    } else {
        for m in [&mut a, &mut b] {
            for i in 0..n {
                for (j, &(lo, hi)) in ranges.bounds.iter().enumerate() {
                    let u: f64 = rng.random();
                    m.set(i, j, lo + u * (hi - lo));
                }
            }
        }
    }
    let ab = (0..d)
        .map(|j| {
            let mut m = a.clone();
            for i in 0..n {
                m.set(i, j, b.get(i, j));
            }
            m
        })
        .collect();
    Ok(SaltelliSample { a, b, ab, n })
}

/// First-order and total Sobol indices plus the output variance they are
/// normalized by. `degenerate` marks an (all-zero) result from a model
/// with no output variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub s1: Vec<f64>,
    pub st: Vec<f64>,
    pub output_variance: f64,
    pub degenerate: bool,
}

/// Variance floor under which indices are reported as all-zero.
const VARIANCE_FLOOR: f64 = 1e-12;

/// Estimate indices for a black-box `f` over a drawn design.
///
/// Evaluations may run in parallel; accumulation is pairwise over
/// index-ordered buffers, so the result does not depend on scheduling.
pub fn estimate_indices<F>(f: F, sample: &SaltelliSample) -> SobolResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let eval = |m: &Matrix| -> Vec<f64> {
        (0..m.n_rows())
            .into_par_iter()
            .map(|i| f(m.row(i)))
            .collect()
    };
    let mut f_a = eval(&sample.a);
    let mut f_b = eval(&sample.b);
    let mut f_ab: Vec<Vec<f64>> = sample.ab.iter().map(eval).collect();

    let d = sample.ab.len();
    let n = sample.n as f64;

    // Output mean and variance over the pooled A and B evaluations.
    let mean = (pairwise_sum(&f_a) + pairwise_sum(&f_b)) / (2.0 * n);
    let sq_dev: Vec<f64> = f_a
        .iter()
        .chain(&f_b)
        .map(|v| (v - mean) * (v - mean))
        .collect();
    let variance = pairwise_mean(&sq_dev);

    if variance < VARIANCE_FLOOR {
        return SobolResult {
            s1: vec![0.0; d],
            st: vec![0.0; d],
            output_variance: variance,
            degenerate: true,
        };
    }

    // Centering leaves both estimators' expectations unchanged and cuts
    // the variance of the first-order cross terms.
    for v in f_a.iter_mut().chain(f_b.iter_mut()) {
        *v -= mean;
    }
    for col in &mut f_ab {
        for v in col.iter_mut() {
            *v -= mean;
        }
    }

    let mut s1 = Vec::with_capacity(d);
    let mut st = Vec::with_capacity(d);
    let mut buf = vec![0.0; sample.n];
    for i in 0..d {
        for j in 0..sample.n {
            buf[j] = f_b[j] * (f_ab[i][j] - f_a[j]);
        }
        s1.push(pairwise_mean(&buf) / variance);
        for j in 0..sample.n {
            let delta = f_a[j] - f_ab[i][j];
            buf[j] = delta * delta;
        }
        st.push(pairwise_mean(&buf) / (2.0 * variance));
    }
    SobolResult {
        s1,
        st,
        output_variance: variance,
        degenerate: false,
    }
}

/// Features whose total index clears `threshold`, in original order.
/// Never empty: if nothing clears it, the single largest-`st` feature is
/// returned.
pub fn select_features(result: &SobolResult, threshold: f64) -> Vec<usize> {
    let selected: Vec<usize> = result
        .st
        .iter()
        .enumerate()
        .filter(|(_, &st)| st >= threshold)
        .map(|(i, _)| i)
        .collect();
    if !selected.is_empty() {
        return selected;
    }
    let argmax = result
        .st
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite indices"))
        .map(|(i, _)| i)
        .unwrap_or(0);
    vec![argmax]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn unit_ranges(d: usize) -> InputRange {
        InputRange::new(vec![(0.0, 1.0); d]).unwrap()
    }

    #[test]
    fn invalid_range_rejected() {
        assert!(matches!(
            InputRange::new(vec![(0.0, 1.0), (2.0, 2.0)]),
            Err(Error::InvalidRange { feature: 1 })
        ));
    }

    #[test]
    fn evaluation_count_is_n_times_d_plus_two() {
        let s = saltelli_sample(&unit_ranges(1), 8, 0).unwrap();
        assert_eq!(s.n_evaluations(), 8 * 3);
        let counter = AtomicUsize::new(0);
        estimate_indices(
            |x| {
                counter.fetch_add(1, Ordering::Relaxed);
                x[0]
            },
            &s,
        );
        assert_eq!(counter.load(Ordering::Relaxed), 24);
    }

    #[test]
    fn design_construction() {
        let s = saltelli_sample(&unit_ranges(2), 4, 9).unwrap();
        for m in [&s.a, &s.b].into_iter().chain(s.ab.iter()) {
            for i in 0..4 {
                for j in 0..2 {
                    let v = m.get(i, j);
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
        // AB_1 takes its first column from B and keeps A's second.
        for i in 0..4 {
            assert_eq!(s.ab[0].get(i, 0), s.b.get(i, 0));
            assert_eq!(s.ab[0].get(i, 1), s.a.get(i, 1));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = saltelli_sample(&unit_ranges(3), 16, 42).unwrap();
        let b = saltelli_sample(&unit_ranges(3), 16, 42).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.b, b.b);
        assert_eq!(a.ab, b.ab);
    }

    #[test]
    fn additive_symmetric_function() {
        // f = x1 + x2 over independent U[0,1]: both indices 0.5, and
        // first-order equals total within Monte-Carlo tolerance.
        let s = saltelli_sample(&unit_ranges(2), 4096, 7).unwrap();
        let r = estimate_indices(|x| x[0] + x[1], &s);
        let tol = 3.0 / 4096.0f64.sqrt();
        for i in 0..2 {
            assert!((r.s1[i] - 0.5).abs() < 0.03, "s1[{i}] = {}", r.s1[i]);
            assert!((r.st[i] - 0.5).abs() < 0.03, "st[{i}] = {}", r.st[i]);
            assert!((r.s1[i] - r.st[i]).abs() <= tol);
        }
    }

    #[test]
    fn ishigami_matches_analytic_decomposition() {
        // Analytic variances of the Ishigami function with a=7, b=0.1.
        let (a, b) = (7.0f64, 0.1f64);
        let pi4 = PI.powi(4);
        let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = b * b * pi4 * pi4 * (1.0 / 18.0 - 1.0 / 50.0);
        let v = v1 + v2 + v13;
        let s1_expected = [v1 / v, v2 / v, 0.0];
        let st3_expected = v13 / v;

        let ranges = InputRange::new(vec![(-PI, PI); 3]).unwrap();
        let s = saltelli_sample(&ranges, 8192, 11).unwrap();
        let r = estimate_indices(
            |x| x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin(),
            &s,
        );
        for i in 0..3 {
            assert!(
                (r.s1[i] - s1_expected[i]).abs() <= 0.05,
                "s1[{i}] = {} vs {}",
                r.s1[i],
                s1_expected[i]
            );
        }
        assert!(
            (r.st[2] - st3_expected).abs() <= 0.05,
            "st[2] = {} vs {st3_expected}",
            r.st[2]
        );
    }

    #[test]
    fn ignored_feature_has_zero_indices() {
        let s = saltelli_sample(&unit_ranges(3), 256, 3).unwrap();
        let r = estimate_indices(|x| 3.0 * x[0] - x[1], &s);
        // x3 never enters f, so AB_3 evaluations equal A's exactly.
        assert_eq!(r.st[2], 0.0);
        assert_eq!(r.s1[2], 0.0);
    }

    #[test]
    fn constant_function_is_degenerate() {
        let s = saltelli_sample(&unit_ranges(2), 64, 0).unwrap();
        let r = estimate_indices(|_| 4.25, &s);
        assert!(r.degenerate);
        assert_eq!(r.s1, vec![0.0, 0.0]);
        assert_eq!(r.st, vec![0.0, 0.0]);
    }

    #[test]
    fn selection_thresholding_and_fallback() {
        let r = SobolResult {
            s1: vec![0.0; 4],
            st: vec![0.4, 0.02, 0.3, 0.3],
            output_variance: 1.0,
            degenerate: false,
        };
        assert_eq!(select_features(&r, 0.05), vec![0, 2, 3]);
        assert_eq!(select_features(&r, 0.0), vec![0, 1, 2, 3]);

        let low = SobolResult {
            s1: vec![0.0; 2],
            st: vec![0.01, 0.03],
            output_variance: 1.0,
            degenerate: false,
        };
        assert_eq!(select_features(&low, 0.05), vec![1]);
    }
}
