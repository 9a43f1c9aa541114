//! Turns raw primitive-event feature tables into complex-event predictions
//! with quantified uncertainty.
//!
//! The pipeline: variance-based sensitivity screening selects the inputs
//! that matter, a forest/kNN-normalized inductive conformal predictor emits
//! calibrated prediction intervals, and a decision layer converts those
//! intervals into labels with confidence (binary, multi-level) or point
//! estimates with width (regression). Two Gaussian probabilistic baselines
//! (NPM, IPM) are included for comparison runs.
//!
//! Modules map onto pipeline stages:
//!
//! - [`data`]: load, validate, split, and synthesize labeled feature tables
//! - [`forest`]: bagged variance-minimizing regression trees
//! - [`knn`]: k-nearest-neighbor regressor (the difficulty model)
//! - [`conformal`]: normalized inductive conformal regression
//! - [`sobol`]: first-order and total Sobol indices, feature selection
//! - [`decision`]: intervals to labels/confidence or value/width
//! - [`baselines`]: NPM/IPM Gaussian reference models
//! - [`metrics`]: classification, regression, and interval metrics
//! - [`pipeline`]: batch orchestration of the full workflow

pub mod baselines;
pub mod conformal;
pub mod data;
pub mod decision;
pub mod error;
pub mod forest;
pub mod knn;
pub mod matrix;
pub mod metrics;
pub mod model_doc;
pub mod pipeline;
pub mod reference;
pub mod sobol;
pub mod util;

pub use error::{Error, Result};
pub use matrix::Matrix;
