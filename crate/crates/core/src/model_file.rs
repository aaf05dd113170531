//! Versioned JSON model files.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::features::{FeatureError, ScalerParams, N_FEATURES};
use crate::learn::{Hyperparams, LearnError, ModelKind, Prediction, TrainedModel};
use crate::matrix::Matrix;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model file has no format_version field")]
    MissingVersion,
    #[error("unsupported model file version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u64),
    #[error("inconsistent model file: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    /// SHA-256 of the training dataset file.
    pub corpus_digest: String,
    /// Left null unless supplied, so repeated runs produce identical files.
    pub timestamp: Option<String>,
    pub train_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u64,
    pub model_kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub scaler: ScalerParams,
    pub parameters: TrainedModel,
    pub training_metadata: TrainingMetadata,
}

/// What `GET /v1/model` reports: everything except fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub format_version: u64,
    pub model_kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub training_metadata: TrainingMetadata,
}

impl ModelFile {
    pub fn new(
        hyperparams: Hyperparams,
        scaler: ScalerParams,
        parameters: TrainedModel,
        training_metadata: TrainingMetadata,
    ) -> Result<ModelFile, ModelFileError> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            model_kind: parameters.kind(),
            hyperparams,
            scaler,
            parameters,
            training_metadata,
        };
        file.check()?;
        Ok(file)
    }

    fn check(&self) -> Result<(), ModelFileError> {
        let bad = |m: String| Err(ModelFileError::Inconsistent(m));
        if self.parameters.kind() != self.model_kind || self.hyperparams.kind() != self.model_kind {
            return bad(format!(
                "model_kind {} but parameters are {} and hyperparams {}",
                self.model_kind,
                self.parameters.kind(),
                self.hyperparams.kind()
            ));
        }
        if !self.parameters.is_well_formed() {
            return bad("model parameters are structurally invalid".into());
        }
        if self.scaler.arity() != N_FEATURES || self.scaler.std.len() != N_FEATURES {
            return bad(format!("scaler has {} features, expected {N_FEATURES}", self.scaler.arity()));
        }
        if self.parameters.n_features() != N_FEATURES {
            return bad(format!(
                "model expects {} features, expected {N_FEATURES}",
                self.parameters.n_features()
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("model serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<ModelFile, ModelFileError> {
        let value: Value = serde_json::from_slice(bytes)?;
        let version = value
            .get("format_version")
            .ok_or(ModelFileError::MissingVersion)?
            .as_u64()
            .ok_or_else(|| ModelFileError::Inconsistent("format_version is not an integer".into()))?;
        if version != FORMAT_VERSION {
            return Err(ModelFileError::UnsupportedVersion(version));
        }
        let file: ModelFile = serde_json::from_value(value)?;
        file.check()?;
        Ok(file)
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            format_version: self.format_version,
            model_kind: self.model_kind,
            hyperparams: self.hyperparams.clone(),
            training_metadata: self.training_metadata.clone(),
        }
    }

    /// Predicts unscaled feature rows using the stored scaler.
    pub fn predict_raw(&self, rows: &Matrix) -> Result<Vec<Prediction>, ModelFileError> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let scaled = self.scaler.transform(rows)?;
        Ok(self.parameters.predict(&scaled)?)
    }
}
