//! Train, tune and evaluate from raw featurized splits.
//!
//! The scaler is fitted on the raw training split; that split is then
//! scaled and balanced before fitting. Validation and test rows are only
//! ever transformed with the training scaler and are never balanced.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{apply_scaler, fit_scaler, undersample, FeatureError, LabeledDataset, ScalerParams};
use crate::learn::grid::{grid_search, GridResult, GridSpec};
use crate::learn::{derive_seed, evaluate, fit, ConfusionMatrix, EvalMetrics, Hyperparams, LearnError, ModelKind};
use crate::model_file::{ModelFile, ModelFileError, TrainingMetadata};
use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub seed: u64,
    /// Undersample the majority class of the training split.
    pub balance: bool,
    /// Seeded subsample of the prepared training rows down to this many.
    pub max_rows: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { seed: crate::DEFAULT_SEED, balance: true, max_rows: None }
    }
}

/// Scaled (and usually balanced) training rows plus the scaler that made them.
#[derive(Debug, Clone)]
pub struct PreparedTrain {
    pub scaler: ScalerParams,
    pub x: Matrix,
    pub y: Vec<u8>,
}

pub fn prepare_train(train: &LabeledDataset, opts: &TrainOptions) -> Result<PreparedTrain, PipelineError> {
    let scaler = fit_scaler(train)?;
    let mut data = apply_scaler(train, &scaler)?;
    if opts.balance {
        data = undersample(&data, opts.seed)?;
    }
    if let Some(cap) = opts.max_rows {
        if data.len() > cap {
            let mut rows: Vec<usize> = (0..data.len()).collect();
            rows.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 0x5ab5)));
            rows.truncate(cap);
            rows.sort_unstable();
            data = data.select(&rows);
        }
    }
    Ok(PreparedTrain { scaler, x: data.features, y: data.labels })
}

pub fn train(
    hp: &Hyperparams,
    train: &LabeledDataset,
    opts: &TrainOptions,
    corpus_digest: String,
    timestamp: Option<String>,
) -> Result<ModelFile, PipelineError> {
    let prepared = prepare_train(train, opts)?;
    let model = fit(hp, &prepared.x, &prepared.y, opts.seed)?;
    let meta = TrainingMetadata { seed: opts.seed, corpus_digest, timestamp, train_rows: prepared.y.len() };
    Ok(ModelFile::new(hp.clone(), prepared.scaler, model, meta)?)
}

pub fn evaluate_model(
    model: &ModelFile,
    data: &LabeledDataset,
) -> Result<(ConfusionMatrix, EvalMetrics), PipelineError> {
    let labels: Vec<u8> = model.predict_raw(&data.features)?.into_iter().map(|p| p.label).collect();
    Ok(evaluate(&labels, &data.labels)?)
}

pub fn tune(
    kind: ModelKind,
    grid: &GridSpec,
    train: &LabeledDataset,
    val: &LabeledDataset,
    opts: &TrainOptions,
) -> Result<GridResult, PipelineError> {
    let prepared = prepare_train(train, opts)?;
    let val_x = prepared.scaler.transform(&val.features)?;
    Ok(grid_search(kind, grid, (&prepared.x, &prepared.y), (&val_x, &val.labels), opts.seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CleanPassword;
    use crate::features::featurize;

    fn dataset() -> LabeledDataset {
        let words = ["123456", "password1", "Abcdef12!", "qwerty", "Zz9!zz9!zz", "11111111", "a1b2c3d4e5", "X9!x9!x9!x"];
        let corpus: Vec<CleanPassword> = (0..200)
            .map(|i| CleanPassword::new(format!("{}{}", words[i % words.len()], i), 1).unwrap())
            .collect();
        featurize(&corpus).unwrap()
    }

    #[test]
    fn prepared_training_is_balanced_and_capped() {
        let data = dataset();
        let p = prepare_train(&data, &TrainOptions::default()).unwrap();
        let strong = p.y.iter().filter(|&&l| l == 1).count();
        assert_eq!(strong * 2, p.y.len());
        let capped = prepare_train(&data, &TrainOptions { max_rows: Some(10), ..TrainOptions::default() }).unwrap();
        assert_eq!(capped.y.len(), 10);
        let unbalanced = prepare_train(&data, &TrainOptions { balance: false, ..TrainOptions::default() }).unwrap();
        assert_eq!(unbalanced.y.len(), data.len());
    }

    #[test]
    fn trained_file_evaluates() {
        let data = dataset();
        let mf = train(&Hyperparams::defaults(ModelKind::Tree), &data, &TrainOptions::default(), "x".into(), None)
            .unwrap();
        let (cm, m) = evaluate_model(&mf, &data).unwrap();
        assert_eq!(cm.total() as usize, data.len());
        assert!(m.accuracy > 0.9);
    }
}
