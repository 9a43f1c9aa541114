//! Versioned JSON model documents for the train/predict separation.
//!
//! One document format serves all three model kinds; the payload carries
//! whichever fitted model backs it. Documents embed the input schema and
//! the selected feature names, so prediction can validate and project
//! incoming datasets, plus the config fingerprint for cross-stage checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{GaussianClassBaseline, WeightedMeanRegressor};
use crate::conformal::IcpModel;
use crate::data::{ColumnSchema, Dataset};
use crate::error::{Error, Result};

pub const MODEL_DOC_VERSION: u32 = 1;

/// Which pipeline produced the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MlCp,
    Npm,
    Ipm,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::MlCp => "ml_cp",
            ModelKind::Npm => "npm",
            ModelKind::Ipm => "ipm",
        }
    }
}

/// The fitted model inside a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPayload {
    Conformal { icp: IcpModel },
    GaussianClass { model: GaussianClassBaseline },
    WeightedRegression { model: WeightedMeanRegressor },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub model_kind: ModelKind,
    /// Full input schema the model was trained against.
    pub schema: ColumnSchema,
    /// Feature names (subset of the schema) the model consumes.
    pub selected_features: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
    pub payload: ModelPayload,
}

impl ModelDocument {
    /// Column indices of the selected features within the schema.
    pub fn selected_indices(&self) -> Result<Vec<usize>> {
        self.selected_features
            .iter()
            .map(|name| {
                self.schema
                    .feature_names
                    .iter()
                    .position(|f| f == name)
                    .ok_or_else(|| {
                        Error::SchemaMismatch(format!(
                            "selected feature `{name}` missing from document schema"
                        ))
                    })
            })
            .collect()
    }

    /// Reject datasets whose feature columns differ from the training
    /// schema (names and order).
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.schema.feature_names != self.schema.feature_names {
            return Err(Error::SchemaMismatch(format!(
                "dataset features {:?} do not match model features {:?}",
                data.schema.feature_names, self.schema.feature_names
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: ModelDocument = serde_json::from_str(&text)?;
        if doc.format_version != MODEL_DOC_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "unsupported model document version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }
}
