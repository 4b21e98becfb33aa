//! Classical baselines: L2-regularised logistic regression trained by
//! full-batch gradient descent, and a k-nearest-neighbour classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const L2_LAMBDA: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Gradient descent on the L2-regularised cross-entropy (lambda 1e-4, not
/// applied to the intercept). Zero initialisation makes the fit fully
/// deterministic.
pub fn logistic_fit(features: &[Vec<f64>], labels: &[u8], lr: f64, epochs: usize) -> Result<LogisticModel> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Learn("features and labels must be non-empty and aligned".into()));
    }
    let ones = labels.iter().filter(|&&l| l > 0).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::Learn("logistic fit needs at least one example per class".into()));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::Learn("feature rows have inconsistent widths".into()));
    }

    let n = features.len() as f64;
    let mut weights = vec![0.0f64; dim];
    let mut intercept = 0.0f64;
    for _ in 0..epochs {
        let mut grad_w = vec![0.0f64; dim];
        let mut grad_b = 0.0f64;
        for (row, &label) in features.iter().zip(labels) {
            let z = intercept + row.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>();
            let err = sigmoid(z) - f64::from(label);
            for (g, x) in grad_w.iter_mut().zip(row) {
                *g += err * x;
            }
            grad_b += err;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= lr * (g / n + L2_LAMBDA * *w);
        }
        intercept -= lr * grad_b / n;
        if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Learn("non-finite logistic weights; lower the learning rate".into()));
        }
    }
    Ok(LogisticModel { weights, intercept })
}

pub fn logistic_probability(model: &LogisticModel, x: &[f64]) -> f64 {
    let z = model.intercept + x.iter().zip(&model.weights).map(|(x, w)| x * w).sum::<f64>();
    sigmoid(z)
}

/// Label 1 when the malfunction probability reaches 0.5.
pub fn logistic_predict(model: &LogisticModel, x: &[f64]) -> u8 {
    u8::from(logistic_probability(model, x) >= 0.5)
}

/// Majority label of the k Euclidean nearest training points. Equal
/// nearest distances resolve by training index; a vote tie returns 1 so
/// suspect devices get flagged.
pub fn knn_predict(train_x: &[Vec<f64>], train_y: &[u8], k: usize, x: &[f64]) -> Result<u8> {
    if train_x.is_empty() || train_x.len() != train_y.len() {
        return Err(Error::Learn("empty or misaligned training set".into()));
    }
    if k == 0 || k > train_x.len() {
        return Err(Error::Learn(format!(
            "k {k} outside 1..={}",
            train_x.len()
        )));
    }
    let mut by_distance: Vec<(f64, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ones = by_distance[..k].iter().filter(|(_, i)| train_y[*i] > 0).count();
    Ok(u8::from(2 * ones >= k))
}
