//! Two-level stacking: a decision tree and an SVM feed their out-of-fold
//! predictions to a logistic-regression meta-learner.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logreg::{fit_logreg, LogRegModel, LogRegParams};
use super::svm::{fit_svm, SvmModel, SvmParams};
use super::tree::{fit_tree, TreeModel, TreeParams};
use super::{check_both_classes, check_fit_input, derive_seed, LearnError, Prediction};
use crate::matrix::Matrix;

/// Fold assignments are redrawn at most this many times.
pub const MAX_FOLD_ATTEMPTS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingParams {
    pub dt: TreeParams,
    pub svm: SvmParams,
    pub meta: LogRegParams,
    pub folds: usize,
}

impl Default for StackingParams {
    fn default() -> Self {
        StackingParams {
            dt: TreeParams::default(),
            svm: SvmParams {
                c: 0.1,
                kernel: super::svm::KernelKind::Linear,
                ..SvmParams::default()
            },
            meta: LogRegParams::default(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingModel {
    pub tree: TreeModel,
    pub svm: SvmModel,
    pub meta: LogRegModel,
}

impl StackingModel {
    pub fn n_features(&self) -> usize {
        self.tree.n_features
    }

    fn meta_row(tree: &TreeModel, svm: &SvmModel, row: &[f64]) -> [f64; 2] {
        [f64::from(tree.predict_row(row).label), f64::from(svm.predict_row(row).label)]
    }

    pub fn predict_row(&self, row: &[f64]) -> Prediction {
        self.meta.predict_row(&Self::meta_row(&self.tree, &self.svm, row))
    }
}

/// Assigns each row to one of `folds` folds such that every fold and every
/// fold complement contains both classes. Retries with fresh seeds.
pub fn assign_folds(y: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>, LearnError> {
    if folds < 2 || folds > y.len() {
        return Err(LearnError::InvalidParam(format!(
            "cannot make {folds} folds from {} rows",
            y.len()
        )));
    }
    for attempt in 0..MAX_FOLD_ATTEMPTS {
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt)));
        let mut assignment = vec![0; y.len()];
        for (pos, &row) in order.iter().enumerate() {
            assignment[row] = pos % folds;
        }
        let total_pos = y.iter().filter(|&&l| l == 1).count();
        let total_neg = y.len() - total_pos;
        let ok = (0..folds).all(|k| {
            let pos = (0..y.len()).filter(|&i| assignment[i] == k && y[i] == 1).count();
            let neg = (0..y.len()).filter(|&i| assignment[i] == k && y[i] == 0).count();
            pos > 0 && neg > 0 && total_pos > pos && total_neg > neg
        });
        if ok {
            return Ok(assignment);
        }
    }
    Err(LearnError::Folds(MAX_FOLD_ATTEMPTS))
}

/// Out-of-fold base predictions: column 0 is the tree, column 1 the SVM.
/// Row `i` comes from base models that never saw row `i`.
pub fn out_of_fold_features(
    x: &Matrix,
    y: &[u8],
    params: &StackingParams,
    seed: u64,
) -> Result<(Matrix, Vec<usize>), LearnError> {
    let assignment = assign_folds(y, params.folds, seed)?;
    let mut meta = vec![0.0; 2 * y.len()];
    for k in 0..params.folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != k).collect();
        let held: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == k).collect();
        let xt = x.select(&train);
        let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
        let tree = fit_tree(&xt, &yt, &params.dt, derive_seed(seed, 100 + k as u64))?;
        let svm = fit_svm(&xt, &yt, &params.svm)?;
        for &i in &held {
            let m = StackingModel::meta_row(&tree, &svm, x.row(i));
            meta[2 * i] = m[0];
            meta[2 * i + 1] = m[1];
        }
    }
    Ok((Matrix::new(2, meta), assignment))
}

pub fn fit_stacking(
    x: &Matrix,
    y: &[u8],
    params: &StackingParams,
    seed: u64,
) -> Result<StackingModel, LearnError> {
    check_fit_input(x, y)?;
    check_both_classes(y)?;
    let (meta_x, _) = out_of_fold_features(x, y, params, seed)?;
    let meta = fit_logreg(&meta_x, y, &params.meta)?;
    let tree = fit_tree(x, y, &params.dt, derive_seed(seed, 99))?;
    let svm = fit_svm(x, y, &params.svm)?;
    Ok(StackingModel { tree, svm, meta })
}
