use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{build, Criterion, MaxFeatures, TreeModel, TreeParams};
use super::{check_fit_input, derive_seed, LearnError, Prediction};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree: TreeParams,
    pub n_estimators: usize,
    /// Draw a bootstrap sample per tree. Disabling it is mainly a test hook.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            tree: TreeParams {
                criterion: Criterion::Entropy,
                max_depth: Some(20),
                min_samples_split: 10,
                min_samples_leaf: 1,
                max_features: MaxFeatures::Sqrt,
            },
            n_estimators: 10,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.trees[0].n_features
    }

    /// Majority vote; probability is the fraction of trees voting strong.
    /// A tied vote predicts weak.
    pub fn predict_row(&self, row: &[f64]) -> Prediction {
        let votes = self.trees.iter().filter(|t| t.predict_row(row).label == 1).count();
        vote(votes, self.trees.len())
    }
}

pub(crate) fn vote(positive: usize, total: usize) -> Prediction {
    Prediction {
        label: u8::from(2 * positive > total),
        probability: Some(positive as f64 / total as f64),
    }
}

/// Trees are grown in parallel; each one's randomness comes only from
/// `derive_seed(seed, index)`, so the result matches a serial run.
pub fn fit_forest(
    x: &Matrix,
    y: &[u8],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, LearnError> {
    check_fit_input(x, y)?;
    if params.n_estimators == 0 {
        return Err(LearnError::InvalidParam("n_estimators must be at least 1".into()));
    }
    params.tree.validate()?;
    let n = x.n_rows();
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            build(x, y, rows, &params.tree, derive_seed(tree_seed, 1))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForestModel { trees })
}
