use serde::{Deserialize, Serialize};

use super::LearnError;

/// Counts with strong (1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> EvalMetrics {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let accuracy = ratio(self.tp + self.tn, self.total());
        let recall = ratio(self.tp, self.tp + self.fn_);
        let precision = ratio(self.tp, self.tp + self.fp);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalMetrics { accuracy, recall, precision, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix, LearnError> {
    if predictions.len() != labels.len() {
        return Err(LearnError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p == 1, l == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

pub fn evaluate(
    predictions: &[u8],
    labels: &[u8],
) -> Result<(ConfusionMatrix, EvalMetrics), LearnError> {
    let cm = confusion(predictions, labels)?;
    Ok((cm, cm.metrics()))
}
