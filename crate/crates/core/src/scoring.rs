//! Scoring a single password against a model file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{check_password, Violation};
use crate::features::{extract_features, failed_rules, label, Features, RuleFailure};
use crate::matrix::Matrix;
use crate::model_file::{ModelFile, ModelFileError};
use crate::{MAX_LENGTH, MIN_LENGTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Weak,
    Strong,
}

impl From<u8> for Strength {
    fn from(label: u8) -> Self {
        if label == 1 {
            Strength::Strong
        } else {
            Strength::Weak
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub label: Strength,
    /// P(strong); absent for models without one (SVM).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    pub features: Features,
    pub rule_label: Strength,
    pub failed_rules: Vec<RuleFailure>,
}

/// Body of a rejected scoring request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub error: String,
    pub rule: String,
}

impl ValidationError {
    pub fn from_violation(v: Violation) -> Self {
        let error = match v {
            Violation::IllegalCharacter => {
                "password may only contain printable ASCII characters other than space".to_owned()
            }
            Violation::Length => format!("password length must be between {MIN_LENGTH} and {MAX_LENGTH}"),
        };
        ValidationError { error, rule: v.rule_name().to_owned() }
    }
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("{}", .0.error)]
    Invalid(ValidationError),
    #[error(transparent)]
    Model(#[from] ModelFileError),
}

/// The deterministic rule diagnosis for a password that passed validation.
pub fn diagnose(password: &str) -> Result<(Features, Strength, Vec<RuleFailure>), ValidationError> {
    check_password(password.as_bytes()).map_err(ValidationError::from_violation)?;
    let f = extract_features(password).expect("validated password featurizes");
    Ok((f, Strength::from(label(&f)), failed_rules(&f)))
}

pub fn score(password: &str, model: &ModelFile) -> Result<ScoreResponse, ScoreError> {
    let (features, rule_label, failed) = diagnose(password).map_err(ScoreError::Invalid)?;
    let row = Matrix::from_rows(&[features.to_row()]);
    let p = model.predict_raw(&row)?[0];
    Ok(ScoreResponse {
        label: Strength::from(p.label),
        probability: p.probability,
        features,
        rule_label,
        failed_rules: failed,
    })
}
