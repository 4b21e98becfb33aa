//! Scores, data splits, cross-validation folds, the warm-up learning-rate
//! schedule and single-parameter grid search.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

/// 2x2 confusion counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Count prediction outcomes per (true, predicted) cell.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Evaluation(format!(
            "length mismatch: {} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut counts = [[0usize; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t > 1 || p > 1 {
            return Err(Error::Evaluation(format!("labels must be 0 or 1, got ({t}, {p})")));
        }
        counts[t as usize][p as usize] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Scores plus the run context they were produced in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub confusion: ConfusionMatrix,
    pub dataset: String,
    pub model: String,
    pub hyperparameters: BTreeMap<String, String>,
}

impl ScoreReport {
    pub fn with_context(mut self, dataset: &str, model: &str) -> Self {
        self.dataset = dataset.to_string();
        self.model = model.to_string();
        self
    }

    /// Flat CSV row consumed by the plot emitter.
    pub fn csv_row(&self, param: &str) -> String {
        format!(
            "{param},{},{},{},{}",
            self.accuracy, self.precision_macro, self.recall_macro, self.f1_macro
        )
    }
}

pub const SCORE_CSV_HEADER: &str = "param,accuracy,precision_macro,recall_macro,f1_macro";

/// Accuracy and macro precision/recall/F1 from a confusion matrix.
/// Zero-division convention: a precision or recall with an empty
/// denominator is 0, and F1 is 0 when precision + recall is 0.
pub fn scores(matrix: &ConfusionMatrix) -> Result<ScoreReport> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::Evaluation("empty confusion matrix".into()));
    }
    let c = &matrix.counts;
    let mut precision = [0.0f64; 2];
    let mut recall = [0.0f64; 2];
    let mut f1 = [0.0f64; 2];
    for k in 0..2 {
        let predicted: usize = c[0][k] + c[1][k];
        let actual: usize = c[k][0] + c[k][1];
        precision[k] = if predicted > 0 {
            c[k][k] as f64 / predicted as f64
        } else {
            0.0
        };
        recall[k] = if actual > 0 {
            c[k][k] as f64 / actual as f64
        } else {
            0.0
        };
        f1[k] = if precision[k] + recall[k] > 0.0 {
            2.0 * precision[k] * recall[k] / (precision[k] + recall[k])
        } else {
            0.0
        };
    }
    Ok(ScoreReport {
        accuracy: (c[0][0] + c[1][1]) as f64 / total as f64,
        precision_macro: (precision[0] + precision[1]) / 2.0,
        recall_macro: (recall[0] + recall[1]) / 2.0,
        f1_macro: (f1[0] + f1[1]) / 2.0,
        confusion: matrix.clone(),
        dataset: String::new(),
        model: String::new(),
        hyperparameters: BTreeMap::new(),
    })
}

fn class_indices(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[(l > 0) as usize].push(i);
    }
    by_class
}

/// Stratified seeded split. The test set receives `ratio` of each class,
/// rounded to nearest (ties up). Returns (train, test) index lists.
pub fn train_test_split(labels: &[u8], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Evaluation(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut indices) in class_indices(labels).into_iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        if indices.len() < 2 {
            return Err(Error::Evaluation(format!(
                "class {class} has fewer than 2 samples"
            )));
        }
        let mut rng = SplitMix64::new(derive_seed(seed, &format!("split_{class}")));
        rng.shuffle(&mut indices);
        let n_test = (ratio * indices.len() as f64 + 0.5).floor() as usize;
        test.extend_from_slice(&indices[..n_test]);
        train.extend_from_slice(&indices[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified k folds as (train, test) index pairs. `k = 1` degenerates to
/// a single split at the configured ratio; larger k deals each class
/// round-robin so fold sizes differ by at most one.
pub fn kfold(labels: &[u8], k: usize, ratio: f64, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k == 0 {
        return Err(Error::Evaluation("k must be >= 1".into()));
    }
    if k == 1 {
        return Ok(vec![train_test_split(labels, ratio, seed)?]);
    }
    let by_class = class_indices(labels);
    for (class, indices) in by_class.iter().enumerate() {
        if !indices.is_empty() && indices.len() < k {
            return Err(Error::Evaluation(format!(
                "k={k} exceeds the {} samples of class {class}",
                indices.len()
            )));
        }
    }
    let mut fold_members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class, mut indices) in by_class.into_iter().enumerate() {
        let mut rng = SplitMix64::new(derive_seed(seed, &format!("fold_{class}")));
        rng.shuffle(&mut indices);
        for (pos, idx) in indices.into_iter().enumerate() {
            fold_members[pos % k].push(idx);
        }
    }
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut test = fold_members[f].clone();
        let mut train: Vec<usize> = fold_members
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, m)| m.iter().copied())
            .collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push((train, test));
    }
    Ok(folds)
}

/// Warm-up learning-rate schedule. With `w = ceil(warmup_fraction * total)`
/// the rate ramps linearly as `base * epoch / w` for `epoch <= w`, then
/// stays at `base`. Epochs are 1-based, so the first epoch already trains
/// at `base / w` rather than zero.
pub fn lr_schedule(epoch: usize, total_epochs: usize, base_lr: f64, warmup_fraction: f64) -> f64 {
    let w = (warmup_fraction * total_epochs as f64).ceil() as usize;
    if epoch <= w && w > 0 {
        base_lr * epoch as f64 / w as f64
    } else {
        base_lr
    }
}

/// One hyperparameter and the values to try.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSpec {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GridSearchEntry {
    pub value: f64,
    pub report: std::result::Result<ScoreReport, String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub entries: Vec<GridSearchEntry>,
    /// Index of the best entry by macro F1, ties to the earlier value.
    pub best_index: Option<usize>,
}

impl GridSearchOutcome {
    pub fn best(&self) -> Option<(f64, &ScoreReport)> {
        self.best_index.map(|i| {
            (
                self.entries[i].value,
                self.entries[i].report.as_ref().expect("best entry has a report"),
            )
        })
    }
}

/// Evaluate every value in order. Evaluator failures are recorded per
/// value and the search continues.
pub fn grid_search<F>(spec: &GridSearchSpec, mut evaluator: F) -> Result<GridSearchOutcome>
where
    F: FnMut(f64) -> Result<ScoreReport>,
{
    if spec.values.is_empty() {
        return Err(Error::Evaluation(format!(
            "grid search over '{}' has no values",
            spec.parameter
        )));
    }
    let mut entries: Vec<GridSearchEntry> = Vec::with_capacity(spec.values.len());
    let mut best_index: Option<usize> = None;
    for (i, &value) in spec.values.iter().enumerate() {
        let report = evaluator(value).map_err(|e| e.to_string());
        if let Ok(r) = &report {
            let better = match best_index {
                None => true,
                Some(b) => {
                    let best_f1 = entries[b]
                        .report
                        .as_ref()
                        .map(|r| r.f1_macro)
                        .unwrap_or(f64::NEG_INFINITY);
                    r.f1_macro > best_f1
                }
            };
            if better {
                best_index = Some(i);
            }
        }
        entries.push(GridSearchEntry { value, report });
    }
    Ok(GridSearchOutcome {
        entries,
        best_index,
    })
}
