//! From-scratch supervised models: an Elman recurrent classifier trained
//! with backprop-through-time, logistic-regression and k-NN baselines, and
//! the OLS/MLP regressors used for load estimation.

mod baselines;
mod regress;
mod rnn;

pub use baselines::{knn_predict, logistic_fit, logistic_predict, logistic_probability, LogisticModel};
pub use regress::{
    mlp_fit, mlp_predict, ols_fit, ols_predict, rmse, LinearModel, MLPRegressor, MlpConfig,
};
pub use rnn::{
    gradient_check, load_rnn, min_preactivation_magnitude, rnn_forward, rnn_predict, rnn_train,
    rnn_train_split, save_rnn, Activation, EpochRecord, RecurrentModel, TrainConfig, TrainOutcome,
};

use crate::error::{Error, Result};

/// Summary statistics of one measurement window:
/// `[mean, population std, min, max, lag-1 autocorrelation]`.
/// The autocorrelation of a constant series is 0 by convention.
pub fn feature_summary(sample: &[f64]) -> Result<[f64; 5]> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::Learn(format!(
            "feature summary needs at least 2 values, got {n}"
        )));
    }
    let min = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        // Constant series: exact statistics, autocorrelation 0 by
        // convention (summation noise would otherwise leak in).
        return Ok([min, 0.0, min, max, 0.0]);
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let denom = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    let lag1 = if denom > 0.0 {
        sample
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / denom
    } else {
        0.0
    };
    Ok([mean, std, min, max, lag1])
}

/// Most frequent label; an exact tie flags 1 (malfunctioning) so suspect
/// devices surface for operator inspection.
pub fn majority_vote(labels: &[u8]) -> Result<u8> {
    if labels.is_empty() {
        return Err(Error::Learn("majority vote over no labels".into()));
    }
    let ones = labels.iter().filter(|&&l| l > 0).count();
    let zeros = labels.len() - ones;
    Ok(u8::from(ones >= zeros))
}
