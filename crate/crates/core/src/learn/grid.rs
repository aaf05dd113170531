//! Exhaustive grid search scored on a held-out validation split.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{evaluate, fit, Hyperparams, LearnError, ModelKind};
use crate::matrix::Matrix;

/// Score recorded for a cell whose fit failed.
pub const FAILED_SCORE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    F1,
}

/// Candidate values per hyperparameter name. Values are JSON scalars (or a
/// list of counts for `hidden_layer_sizes`); `null` means unlimited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub params: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
}

impl GridSpec {
    /// The grid shipped for `kind`; it contains the tuned defaults.
    pub fn default_for(kind: ModelKind) -> GridSpec {
        let text = match kind {
            ModelKind::LogReg => include_str!("../../grids/lr.json"),
            ModelKind::Svm => include_str!("../../grids/svm.json"),
            ModelKind::Mlp => include_str!("../../grids/mlp.json"),
            ModelKind::Tree => include_str!("../../grids/dt.json"),
            ModelKind::Forest => include_str!("../../grids/rf.json"),
            ModelKind::Stacking => include_str!("../../grids/stack.json"),
        };
        serde_json::from_str(text).expect("shipped grid parses")
    }

    pub fn from_json(text: &str) -> Result<GridSpec, LearnError> {
        let grid: GridSpec = serde_json::from_str(text)
            .map_err(|e| LearnError::InvalidParam(format!("grid file: {e}")))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.params.is_empty() {
            return Err(LearnError::InvalidParam("grid has no parameters".into()));
        }
        if let Some((k, _)) = self.params.iter().find(|(_, v)| v.is_empty()) {
            return Err(LearnError::InvalidParam(format!("grid parameter {k} has no candidates")));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.params.values().map(Vec::len).product()
    }

    /// Cartesian product in key order; the last key varies fastest.
    pub fn cells(&self) -> Result<Vec<Vec<(String, String)>>, LearnError> {
        self.validate()?;
        let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, values) in &self.params {
            let texts = values
                .iter()
                .map(|v| value_text(key, v))
                .collect::<Result<Vec<_>, _>>()?;
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    texts.iter().map(move |t| {
                        let mut cell = prefix.clone();
                        cell.push((key.clone(), t.clone()));
                        cell
                    })
                })
                .collect();
        }
        Ok(cells)
    }
}

fn value_text(key: &str, v: &Value) -> Result<String, LearnError> {
    Ok(match v {
        Value::Null => "none".into(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items
            .iter()
            .map(|i| value_text(key, i))
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        Value::Object(_) => {
            return Err(LearnError::InvalidParam(format!("object candidate for {key}")))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub cell_id: usize,
    pub params: String,
    pub val_f1: f64,
    pub val_accuracy: f64,
    pub val_recall: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best_cell: usize,
    pub best: Hyperparams,
    pub table: Vec<ScoreRow>,
}

/// Fits every cell on `train` and scores it on `val`. Cells run in parallel;
/// each uses the same seed, so the result equals a serial run.
pub fn grid_search(
    kind: ModelKind,
    grid: &GridSpec,
    train: (&Matrix, &[u8]),
    val: (&Matrix, &[u8]),
    seed: u64,
) -> Result<GridResult, LearnError> {
    let cells = grid.cells()?;
    let scored: Vec<(Option<Hyperparams>, ScoreRow)> = cells
        .par_iter()
        .enumerate()
        .map(|(cell_id, cell)| {
            let params = cell.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
            let outcome = (|| {
                let mut hp = Hyperparams::defaults(kind);
                for (k, v) in cell {
                    hp.set(k, v)?;
                }
                let model = fit(&hp, train.0, train.1, seed)?;
                let (_, m) = evaluate(&model.predict_labels(val.0)?, val.1)?;
                Ok::<_, LearnError>((hp, m))
            })();
            match outcome {
                Ok((hp, m)) => (
                    Some(hp),
                    ScoreRow { cell_id, params, val_f1: m.f1, val_accuracy: m.accuracy, val_recall: m.recall },
                ),
                Err(_) => (
                    None,
                    ScoreRow {
                        cell_id,
                        params,
                        val_f1: FAILED_SCORE,
                        val_accuracy: FAILED_SCORE,
                        val_recall: FAILED_SCORE,
                    },
                ),
            }
        })
        .collect();

    let best_cell = best_row(scored.iter().map(|(_, r)| r)).ok_or(LearnError::NoViableCell)?;
    let best = scored[best_cell].0.clone().ok_or(LearnError::NoViableCell)?;
    Ok(GridResult { best_cell, best, table: scored.into_iter().map(|(_, r)| r).collect() })
}

/// Index of the highest F1, earliest on ties; failed cells never win.
pub fn best_row<'a>(rows: impl IntoIterator<Item = &'a ScoreRow>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.into_iter().enumerate() {
        if r.val_f1 == FAILED_SCORE {
            continue;
        }
        if best.is_none_or(|(_, f)| r.val_f1 > f) {
            best = Some((i, r.val_f1));
        }
    }
    best.map(|(i, _)| i)
}

pub fn write_score_table<W: Write>(out: W, table: &[ScoreRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in table {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_score_table<R: std::io::Read>(input: R) -> Result<Vec<ScoreRow>, csv::Error> {
    #[derive(Deserialize)]
    struct Raw {
        cell_id: usize,
        params: String,
        val_f1: f64,
        val_accuracy: f64,
        val_recall: f64,
    }
    csv::Reader::from_reader(input)
        .deserialize::<Raw>()
        .map(|r| {
            r.map(|r| ScoreRow {
                cell_id: r.cell_id,
                params: r.params,
                val_f1: r.val_f1,
                val_accuracy: r.val_accuracy,
                val_recall: r.val_recall,
            })
        })
        .collect()
}
