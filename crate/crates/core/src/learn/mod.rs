//! Classifiers, hyperparameters, evaluation and grid search.

pub mod forest;
pub mod grid;
pub mod logreg;
pub mod metrics;
pub mod mlp;
pub mod stacking;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use forest::{fit_forest, ForestModel, ForestParams};
use logreg::{fit_logreg, LogRegModel, LogRegParams};
use mlp::{fit_mlp, MlpModel, MlpParams};
use stacking::{fit_stacking, StackingModel, StackingParams};
use svm::{fit_svm, Gamma, KernelKind, SvmModel, SvmParams};
use tree::{fit_tree, Criterion, MaxFeatures, TreeModel, TreeParams};

pub use metrics::{evaluate, ConfusionMatrix, EvalMetrics};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data is empty")]
    EmptyInput,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("non-finite value in inputs or during optimization")]
    NonFinite,
    #[error("expected {expected} features per row, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("{0} predictions but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("training set has {rows} rows, above the SVM cap of {cap}; subsample first")]
    TooLarge { rows: usize, cap: usize },
    #[error("training diverged (non-finite loss)")]
    Diverged,
    #[error("could not draw folds with both classes in {0} attempts")]
    Folds(u64),
    #[error("invalid hyperparameter: {0}")]
    InvalidParam(String),
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("grid has no successful cell")]
    NoViableCell,
}

/// A predicted class and, where the model defines one, P(strong).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub probability: Option<f64>,
}

pub(crate) fn check_fit_input(x: &Matrix, y: &[u8]) -> Result<(), LearnError> {
    if x.n_rows() != y.len() {
        return Err(LearnError::LengthMismatch(x.n_rows(), y.len()));
    }
    if y.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(LearnError::BadLabel(bad));
    }
    if !x.all_finite() {
        return Err(LearnError::NonFinite);
    }
    Ok(())
}

pub(crate) fn check_both_classes(y: &[u8]) -> Result<(), LearnError> {
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(LearnError::SingleClass);
    }
    Ok(())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent per-task seed derived from a base seed and a task index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "lr")]
    LogReg,
    #[serde(rename = "svm")]
    Svm,
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "dt")]
    Tree,
    #[serde(rename = "rf")]
    Forest,
    #[serde(rename = "stack")]
    Stacking,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Tree,
        ModelKind::Forest,
        ModelKind::LogReg,
        ModelKind::Svm,
        ModelKind::Mlp,
        ModelKind::Stacking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogReg => "lr",
            ModelKind::Svm => "svm",
            ModelKind::Mlp => "mlp",
            ModelKind::Tree => "dt",
            ModelKind::Forest => "rf",
            ModelKind::Stacking => "stack",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LearnError::InvalidParam(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Hyperparams {
    #[serde(rename = "lr")]
    LogReg(LogRegParams),
    #[serde(rename = "svm")]
    Svm(SvmParams),
    #[serde(rename = "mlp")]
    Mlp(MlpParams),
    #[serde(rename = "dt")]
    Tree(TreeParams),
    #[serde(rename = "rf")]
    Forest(ForestParams),
    #[serde(rename = "stack")]
    Stacking(StackingParams),
}

impl Hyperparams {
    /// The tuned settings each model ships with.
    pub fn defaults(kind: ModelKind) -> Hyperparams {
        match kind {
            ModelKind::LogReg => Hyperparams::LogReg(LogRegParams::default()),
            ModelKind::Svm => Hyperparams::Svm(SvmParams { c: 10.0, ..SvmParams::default() }),
            ModelKind::Mlp => Hyperparams::Mlp(MlpParams::default()),
            ModelKind::Tree => Hyperparams::Tree(TreeParams::default()),
            ModelKind::Forest => Hyperparams::Forest(ForestParams::default()),
            ModelKind::Stacking => Hyperparams::Stacking(StackingParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::LogReg(_) => ModelKind::LogReg,
            Hyperparams::Svm(_) => ModelKind::Svm,
            Hyperparams::Mlp(_) => ModelKind::Mlp,
            Hyperparams::Tree(_) => ModelKind::Tree,
            Hyperparams::Forest(_) => ModelKind::Forest,
            Hyperparams::Stacking(_) => ModelKind::Stacking,
        }
    }

    /// Sets one named hyperparameter from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), LearnError> {
        let value = value.trim();
        match self {
            Hyperparams::LogReg(p) => set_logreg(p, key, value),
            Hyperparams::Svm(p) => set_svm(p, key, value),
            Hyperparams::Mlp(p) => set_mlp(p, key, value),
            Hyperparams::Tree(p) => set_tree(p, key, value),
            Hyperparams::Forest(p) => match key {
                "n_estimators" => {
                    p.n_estimators = parse_count(key, value)?;
                    Ok(())
                }
                "bootstrap" => {
                    p.bootstrap = parse_bool(key, value)?;
                    Ok(())
                }
                _ => set_tree(&mut p.tree, key, value),
            },
            Hyperparams::Stacking(p) => {
                if let Some(k) = key.strip_prefix("dt_") {
                    set_tree(&mut p.dt, k, value)
                } else if let Some(k) = key.strip_prefix("svm_") {
                    set_svm(&mut p.svm, k, value)
                } else if let Some(k) = key.strip_prefix("meta_") {
                    set_logreg(&mut p.meta, k, value)
                } else if key == "folds" || key == "cv" {
                    p.folds = parse_count(key, value)?;
                    Ok(())
                } else {
                    Err(unknown(key))
                }
            }
        }
    }

    /// Applies a `k=v,k=v` list. Commas inside a value (as in
    /// `hidden_layer_sizes=64,32`) are kept with that value.
    pub fn apply_list(&mut self, list: &str) -> Result<(), LearnError> {
        for (k, v) in parse_param_list(list)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }
}

pub fn parse_param_list(list: &str) -> Result<Vec<(String, String)>, LearnError> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for piece in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match piece.split_once('=') {
            Some((k, v)) => pairs.push((k.trim().to_owned(), v.trim().to_owned())),
            None => match pairs.last_mut() {
                Some((_, v)) => {
                    v.push(',');
                    v.push_str(piece);
                }
                None => {
                    return Err(LearnError::InvalidParam(format!("expected key=value, got {piece:?}")))
                }
            },
        }
    }
    Ok(pairs)
}

fn unknown(key: &str) -> LearnError {
    LearnError::InvalidParam(format!("unknown hyperparameter {key:?}"))
}

fn bad(key: &str, value: &str) -> LearnError {
    LearnError::InvalidParam(format!("bad value {value:?} for {key}"))
}

fn parse_count(key: &str, value: &str) -> Result<usize, LearnError> {
    match value.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(bad(key, value)),
    }
}

fn parse_positive(key: &str, value: &str) -> Result<f64, LearnError> {
    match value.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(bad(key, value)),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, LearnError> {
    value.parse::<bool>().map_err(|_| bad(key, value))
}

fn is_none(value: &str) -> bool {
    matches!(value.to_ascii_lowercase().as_str(), "none" | "null" | "unlimited")
}

fn set_tree(p: &mut TreeParams, key: &str, value: &str) -> Result<(), LearnError> {
    match key {
        "criterion" => {
            p.criterion = match value {
                "gini" => Criterion::Gini,
                "entropy" => Criterion::Entropy,
                _ => return Err(bad(key, value)),
            }
        }
        "max_depth" => {
            p.max_depth = if is_none(value) { None } else { Some(parse_count(key, value)?) }
        }
        "min_samples_split" => {
            p.min_samples_split = parse_count(key, value)?;
            if p.min_samples_split < 2 {
                return Err(bad(key, value));
            }
        }
        "min_samples_leaf" => p.min_samples_leaf = parse_count(key, value)?,
        "max_features" => {
            p.max_features = match value {
                "all" | "none" | "None" => MaxFeatures::All,
                "sqrt" => MaxFeatures::Sqrt,
                v => MaxFeatures::Count(parse_count(key, v)?),
            }
        }
        _ => return Err(unknown(key)),
    }
    Ok(())
}

fn set_logreg(p: &mut LogRegParams, key: &str, value: &str) -> Result<(), LearnError> {
    match key {
        "C" | "c" => p.c = parse_positive(key, value)?,
        "max_iter" => p.max_iter = parse_count(key, value)?,
        "tol" => p.tol = parse_positive(key, value)?,
        "solver" if value == "newton-cg" || value == "newton" => {}
        _ => return Err(if key == "solver" { bad(key, value) } else { unknown(key) }),
    }
    Ok(())
}

fn set_svm(p: &mut SvmParams, key: &str, value: &str) -> Result<(), LearnError> {
    match key {
        "C" | "c" => p.c = parse_positive(key, value)?,
        "kernel" => {
            p.kernel = match value {
                "rbf" => KernelKind::Rbf,
                "linear" => KernelKind::Linear,
                _ => return Err(bad(key, value)),
            }
        }
        "gamma" => {
            p.gamma = if value == "scale" { Gamma::Scale } else { Gamma::Value(parse_positive(key, value)?) }
        }
        "tol" => p.tol = parse_positive(key, value)?,
        "max_iter" => p.max_iter = parse_count(key, value)?,
        "max_train_size" => p.max_train_size = parse_count(key, value)?,
        "cache_mb" => p.cache_mb = value.parse().map_err(|_| bad(key, value))?,
        _ => return Err(unknown(key)),
    }
    Ok(())
}

fn set_mlp(p: &mut MlpParams, key: &str, value: &str) -> Result<(), LearnError> {
    match key {
        "hidden_layer_sizes" => {
            let inner = value.trim_matches(|c| c == '(' || c == ')' || c == '[' || c == ']');
            let sizes = inner
                .split([',', 'x'])
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_count(key, s))
                .collect::<Result<Vec<_>, _>>()?;
            if sizes.is_empty() {
                return Err(bad(key, value));
            }
            p.hidden_layer_sizes = sizes;
        }
        "max_iter" => p.max_iter = parse_count(key, value)?,
        "learning_rate_init" | "learning_rate" => p.learning_rate = parse_positive(key, value)?,
        "batch_size" => p.batch_size = parse_count(key, value)?,
        "tol" => p.tol = parse_positive(key, value)?,
        "n_iter_no_change" => p.n_iter_no_change = parse_count(key, value)?,
        "activation" if value == "relu" => {}
        "solver" if value == "adam" => {}
        "activation" | "solver" => return Err(bad(key, value)),
        _ => return Err(unknown(key)),
    }
    Ok(())
}

/// A fitted classifier of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model")]
pub enum TrainedModel {
    #[serde(rename = "lr")]
    LogReg(LogRegModel),
    #[serde(rename = "svm")]
    Svm(SvmModel),
    #[serde(rename = "mlp")]
    Mlp(MlpModel),
    #[serde(rename = "dt")]
    Tree(TreeModel),
    #[serde(rename = "rf")]
    Forest(ForestModel),
    #[serde(rename = "stack")]
    Stacking(StackingModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::LogReg(_) => ModelKind::LogReg,
            TrainedModel::Svm(_) => ModelKind::Svm,
            TrainedModel::Mlp(_) => ModelKind::Mlp,
            TrainedModel::Tree(_) => ModelKind::Tree,
            TrainedModel::Forest(_) => ModelKind::Forest,
            TrainedModel::Stacking(_) => ModelKind::Stacking,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::LogReg(m) => m.n_features(),
            TrainedModel::Svm(m) => m.n_features(),
            TrainedModel::Mlp(m) => m.n_features(),
            TrainedModel::Tree(m) => m.n_features,
            TrainedModel::Forest(m) => m.n_features(),
            TrainedModel::Stacking(m) => m.n_features(),
        }
    }

    /// Structural checks for parameters read from disk.
    pub fn is_well_formed(&self) -> bool {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            TrainedModel::LogReg(m) => !m.weights.is_empty() && finite(&m.weights) && m.bias.is_finite(),
            TrainedModel::Svm(m) => svm_well_formed(m),
            TrainedModel::Mlp(m) => {
                !m.layers.is_empty()
                    && m.layers.last().is_some_and(|l| l.fan_out == 1)
                    && m.layers.windows(2).all(|w| w[0].fan_out == w[1].fan_in)
                    && m.layers.iter().all(|l| {
                        l.fan_in > 0
                            && l.weights.len() == l.fan_in * l.fan_out
                            && l.biases.len() == l.fan_out
                            && finite(&l.weights)
                            && finite(&l.biases)
                    })
            }
            TrainedModel::Tree(m) => m.is_well_formed(),
            TrainedModel::Forest(m) => {
                !m.trees.is_empty()
                    && m.trees.iter().all(|t| t.is_well_formed() && t.n_features == m.trees[0].n_features)
            }
            TrainedModel::Stacking(m) => {
                m.tree.is_well_formed()
                    && svm_well_formed(&m.svm)
                    && m.svm.n_features() == m.tree.n_features
                    && m.meta.weights.len() == 2
            }
        }
    }

    /// Predicts one already-scaled row.
    pub fn predict_row(&self, row: &[f64]) -> Result<Prediction, LearnError> {
        if row.len() != self.n_features() {
            return Err(LearnError::Arity { expected: self.n_features(), found: row.len() });
        }
        Ok(match self {
            TrainedModel::LogReg(m) => m.predict_row(row),
            TrainedModel::Svm(m) => m.predict_row(row),
            TrainedModel::Mlp(m) => m.predict_row(row),
            TrainedModel::Tree(m) => m.predict_row(row),
            TrainedModel::Forest(m) => m.predict_row(row),
            TrainedModel::Stacking(m) => m.predict_row(row),
        })
    }

    /// Predicts already-scaled rows.
    pub fn predict(&self, rows: &Matrix) -> Result<Vec<Prediction>, LearnError> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        if rows.n_cols() != self.n_features() {
            return Err(LearnError::Arity { expected: self.n_features(), found: rows.n_cols() });
        }
        let rows: Vec<&[f64]> = rows.rows().collect();
        rows.par_iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn predict_labels(&self, rows: &Matrix) -> Result<Vec<u8>, LearnError> {
        Ok(self.predict(rows)?.into_iter().map(|p| p.label).collect())
    }
}

fn svm_well_formed(m: &SvmModel) -> bool {
    m.support_vectors.n_cols() > 0
        && m.support_vectors.n_rows() == m.dual_coef.len()
        && m.rho.is_finite()
        && m.linear_weights.as_ref().is_none_or(|w| w.len() == m.support_vectors.n_cols())
}

/// Fits the model described by `hp`.
pub fn fit(hp: &Hyperparams, x: &Matrix, y: &[u8], seed: u64) -> Result<TrainedModel, LearnError> {
    Ok(match hp {
        Hyperparams::LogReg(p) => TrainedModel::LogReg(fit_logreg(x, y, p)?),
        Hyperparams::Svm(p) => TrainedModel::Svm(fit_svm(x, y, p)?),
        Hyperparams::Mlp(p) => TrainedModel::Mlp(fit_mlp(x, y, p, seed)?),
        Hyperparams::Tree(p) => TrainedModel::Tree(fit_tree(x, y, p, seed)?),
        Hyperparams::Forest(p) => TrainedModel::Forest(fit_forest(x, y, p, seed)?),
        Hyperparams::Stacking(p) => TrainedModel::Stacking(fit_stacking(x, y, p, seed)?),
    })
}
