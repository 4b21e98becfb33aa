//! Regressors for load estimation: ordinary least squares via the normal
//! equations with a ridge fallback, and a one-hidden-layer MLP trained by
//! minibatch SGD on squared error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::lr_schedule;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Solve the normal equations by Gaussian elimination with partial
/// pivoting. When the Gram matrix looks near-singular (pivot-ratio
/// condition estimate above 1e12, a zero pivot, or a non-finite solution)
/// the solve is repeated with 1e-8 added to the diagonal, so a finite
/// solution always exists.
pub fn ols_fit(x: &[Vec<f64>], y: &[f64]) -> Result<LinearModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Learn("ols needs aligned, non-empty rows".into()));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::Learn("feature rows have inconsistent widths".into()));
    }
    // Design with the intercept as a leading ones column.
    let cols = dim + 1;
    let mut gram = vec![vec![0.0f64; cols]; cols];
    let mut rhs = vec![0.0f64; cols];
    for (row, &target) in x.iter().zip(y) {
        let design = |k: usize| if k == 0 { 1.0 } else { row[k - 1] };
        for i in 0..cols {
            rhs[i] += design(i) * target;
            for j in 0..cols {
                gram[i][j] += design(i) * design(j);
            }
        }
    }

    let solution = match solve_with_condition(&gram, &rhs) {
        Some((beta, condition)) if condition <= 1e12 && beta.iter().all(|b| b.is_finite()) => beta,
        _ => {
            let mut ridged = gram.clone();
            for (i, row) in ridged.iter_mut().enumerate() {
                row[i] += 1e-8;
            }
            solve_with_condition(&ridged, &rhs)
                .map(|(beta, _)| beta)
                .ok_or_else(|| Error::Learn("ridge fallback failed to solve".into()))?
        }
    };
    Ok(LinearModel {
        intercept: solution[0],
        weights: solution[1..].to_vec(),
    })
}

/// Gaussian elimination returning the solution and a pivot-ratio condition
/// estimate (max |pivot| / min |pivot|).
fn solve_with_condition(matrix: &[Vec<f64>], rhs: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = rhs.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut b: Vec<f64> = rhs.to_vec();
    let mut max_pivot = 0.0f64;
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        let magnitude = a[pivot][col].abs();
        if magnitude == 0.0 {
            return None;
        }
        max_pivot = max_pivot.max(magnitude);
        min_pivot = min_pivot.min(magnitude);
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some((x, max_pivot / min_pivot))
}

pub fn ols_predict(model: &LinearModel, x: &[f64]) -> f64 {
    model.intercept + x.iter().zip(&model.weights).map(|(a, w)| a * w).sum::<f64>()
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> f64 {
    let n = predicted.len().max(1) as f64;
    (predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// One tanh hidden layer, linear outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPRegressor {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    /// hidden x in_dim, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// out_dim x hidden, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 400,
            base_lr: 0.02,
            batch_size: 32,
            warmup_fraction: 0.10,
            seed: 1,
        }
    }
}

impl MLPRegressor {
    fn forward(&self, x: &[f64], hidden_out: &mut [f64]) -> Vec<f64> {
        for j in 0..self.hidden {
            let mut a = self.b1[j];
            for (i, v) in x.iter().enumerate() {
                a += self.w1[j * self.in_dim + i] * v;
            }
            hidden_out[j] = a.tanh();
        }
        (0..self.out_dim)
            .map(|o| {
                let mut a = self.b2[o];
                for (j, h) in hidden_out.iter().enumerate() {
                    a += self.w2[o * self.hidden + j] * h;
                }
                a
            })
            .collect()
    }
}

/// Minibatch SGD on mean squared error with the warm-up schedule. Weights
/// start seeded-uniform in [-0.1, 0.1].
pub fn mlp_fit(x: &[Vec<f64>], y: &[Vec<f64>], config: &MlpConfig) -> Result<MLPRegressor> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Learn("mlp needs aligned, non-empty rows".into()));
    }
    let in_dim = x[0].len();
    let out_dim = y[0].len();
    if x.iter().any(|r| r.len() != in_dim) || y.iter().any(|r| r.len() != out_dim) {
        return Err(Error::Learn("rows have inconsistent widths".into()));
    }

    let mut rng = SplitMix64::new(derive_seed(config.seed, "mlp_init"));
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.uniform(-0.1, 0.1)).collect() };
    let mut model = MLPRegressor {
        in_dim,
        hidden: config.hidden,
        out_dim,
        w1: draw(config.hidden * in_dim),
        b1: draw(config.hidden),
        w2: draw(out_dim * config.hidden),
        b2: draw(out_dim),
    };

    let mut hidden = vec![0.0; config.hidden];
    for epoch in 1..=config.epochs {
        let lr = lr_schedule(epoch, config.epochs, config.base_lr, config.warmup_fraction);
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut shuffle_rng = SplitMix64::new(derive_seed(config.seed, &format!("mlp_{epoch}")));
        shuffle_rng.shuffle(&mut order);

        for batch in order.chunks(config.batch_size.max(1)) {
            let mut g_w1 = vec![0.0; model.w1.len()];
            let mut g_b1 = vec![0.0; model.b1.len()];
            let mut g_w2 = vec![0.0; model.w2.len()];
            let mut g_b2 = vec![0.0; model.b2.len()];
            let mut batch_loss = 0.0;
            for &i in batch {
                let out = model.forward(&x[i], &mut hidden);
                // d(MSE)/d(out) = 2 (out - y) / out_dim.
                let mut d_out = vec![0.0; out_dim];
                for o in 0..out_dim {
                    let e = out[o] - y[i][o];
                    batch_loss += e * e / out_dim as f64;
                    d_out[o] = 2.0 * e / out_dim as f64;
                }
                let mut d_hidden = vec![0.0; config.hidden];
                for o in 0..out_dim {
                    for j in 0..config.hidden {
                        g_w2[o * config.hidden + j] += d_out[o] * hidden[j];
                        d_hidden[j] += d_out[o] * model.w2[o * config.hidden + j];
                    }
                    g_b2[o] += d_out[o];
                }
                for j in 0..config.hidden {
                    let da = d_hidden[j] * (1.0 - hidden[j] * hidden[j]);
                    for (k, v) in x[i].iter().enumerate() {
                        g_w1[j * in_dim + k] += da * v;
                    }
                    g_b1[j] += da;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Learn(format!(
                    "non-finite mlp loss in epoch {epoch}; aborting"
                )));
            }
            let scale = lr / batch.len() as f64;
            for (w, g) in model.w1.iter_mut().zip(&g_w1) {
                *w -= scale * g;
            }
            for (w, g) in model.b1.iter_mut().zip(&g_b1) {
                *w -= scale * g;
            }
            for (w, g) in model.w2.iter_mut().zip(&g_w2) {
                *w -= scale * g;
            }
            for (w, g) in model.b2.iter_mut().zip(&g_b2) {
                *w -= scale * g;
            }
        }
    }
    Ok(model)
}

pub fn mlp_predict(model: &MLPRegressor, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut hidden = vec![0.0; model.hidden];
    x.iter().map(|row| model.forward(row, &mut hidden)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolating_line() {
        // y = 2x + 1 over {0, 1, 2}.
        let x: Vec<Vec<f64>> = [0.0, 1.0, 2.0].iter().map(|&v| vec![v]).collect();
        let y = vec![1.0, 3.0, 5.0];
        let model = ols_fit(&x, &y).unwrap();
        assert!((model.weights[0] - 2.0).abs() < 1e-10);
        assert!((model.intercept - 1.0).abs() < 1e-10);
    }

    #[test]
    fn least_squares_by_hand() {
        // (0,0), (1,1), (2,1): slope 1/2, intercept 1/6.
        let x: Vec<Vec<f64>> = [0.0, 1.0, 2.0].iter().map(|&v| vec![v]).collect();
        let y = vec![0.0, 1.0, 1.0];
        let model = ols_fit(&x, &y).unwrap();
        assert!((model.weights[0] - 0.5).abs() < 1e-10);
        assert!((model.intercept - 1.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn duplicated_column_falls_back_to_ridge() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..6).map(|i| 3.0 * i as f64).collect();
        let model = ols_fit(&x, &y).unwrap();
        assert!(model.weights.iter().all(|w| w.is_finite()));
        // The ridged solution still fits the targets.
        for (row, &target) in x.iter().zip(&y) {
            assert!((ols_predict(&model, row) - target).abs() < 1e-3);
        }
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let mut rng = SplitMix64::new(21);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)])
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 1.5 * r[0] - 0.7 * r[1] + 0.2 * r[2] + rng.uniform(-0.1, 0.1))
            .collect();
        let model = ols_fit(&x, &y).unwrap();
        let residuals: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(r, &t)| t - ols_predict(model_ref(&model), r))
            .collect();
        // <residual, column> = 0 for the intercept and every feature.
        let dot0: f64 = residuals.iter().sum();
        assert!(dot0.abs() < 1e-8, "{dot0}");
        for c in 0..3 {
            let dot: f64 = x.iter().zip(&residuals).map(|(r, e)| r[c] * e).sum();
            assert!(dot.abs() < 1e-8, "column {c}: {dot}");
        }
    }

    fn model_ref(m: &LinearModel) -> &LinearModel {
        m
    }

    #[test]
    fn mlp_learns_noiseless_linear_target() {
        // The tanh distortion of the small-init features decays slowly, so
        // this needs a long run to push under 1e-3.
        let mut rng = SplitMix64::new(5);
        let x: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| vec![0.7 * r[0] - 0.2]).collect();
        let config = MlpConfig {
            epochs: 100_000,
            base_lr: 0.1,
            batch_size: 8,
            seed: 5,
            ..MlpConfig::default()
        };
        let model = mlp_fit(&x, &y, &config).unwrap();
        let pred = mlp_predict(&model, &x);
        let err = rmse(
            &pred.iter().map(|p| p[0]).collect::<Vec<_>>(),
            &y.iter().map(|t| t[0]).collect::<Vec<_>>(),
        );
        assert!(err < 1e-3, "rmse {err}");
    }

    #[test]
    fn mlp_is_reproducible() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * r[0]]).collect();
        let config = MlpConfig { epochs: 50, ..MlpConfig::default() };
        let a = mlp_fit(&x, &y, &config).unwrap();
        let b = mlp_fit(&x, &y, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mlp_beats_ols_on_quadratic_target() {
        // y = x^2 over [-1, 1]: the best line has irreducible error while
        // the MLP can bend.
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![-1.0 + 2.0 * i as f64 / 99.0]).collect();
        let targets: Vec<f64> = x.iter().map(|r| r[0] * r[0]).collect();

        let ols = ols_fit(&x, &targets).unwrap();
        let ols_rmse = rmse(
            &x.iter().map(|r| ols_predict(&ols, r)).collect::<Vec<_>>(),
            &targets,
        );

        let y_rows: Vec<Vec<f64>> = targets.iter().map(|&t| vec![t]).collect();
        let config = MlpConfig {
            epochs: 20_000,
            base_lr: 0.05,
            batch_size: 8,
            seed: 2,
            ..MlpConfig::default()
        };
        let mlp = mlp_fit(&x, &y_rows, &config).unwrap();
        let mlp_rmse = rmse(
            &mlp_predict(&mlp, &x).iter().map(|p| p[0]).collect::<Vec<_>>(),
            &targets,
        );
        assert!(
            mlp_rmse < ols_rmse,
            "mlp {mlp_rmse} should beat ols {ols_rmse}"
        );
    }

    #[test]
    fn shape_errors() {
        assert!(ols_fit(&[], &[]).is_err());
        assert!(mlp_fit(&[vec![1.0]], &[], &MlpConfig::default()).is_err());
    }
}
