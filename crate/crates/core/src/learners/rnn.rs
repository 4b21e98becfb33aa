//! Elman recurrent classifier over scalar sequences, trained with plain
//! SGD on cross-entropy and full backprop-through-time.
//!
//! Layers stack: layer 0 reads the input sequence, each further layer
//! reads the hidden state of the one below at the same step. The class
//! scores come from a linear projection of the last layer's final hidden
//! state through a softmax.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{read_f64_block, write_f64_block};
use crate::error::{Error, Result};
use crate::evaluation::{self, kfold, lr_schedule, ScoreReport};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Tanh => a.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation `a` and output `h`.
    fn derivative(self, a: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
        }
    }
}

/// One recurrent layer: `h_t = act(W_in . in_t + W_rec . h_{t-1} + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    /// hidden x in_dim, row-major.
    pub w_in: Vec<f64>,
    /// hidden x hidden, row-major.
    pub w_rec: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub layers: Vec<Layer>,
    /// 2 x hidden, row-major.
    pub w_out: Vec<f64>,
    pub b_out: [f64; 2],
}

impl RecurrentModel {
    /// Seeded uniform initialisation in [-0.1, 0.1].
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        layer_count: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || layer_count == 0 {
            return Err(Error::Learn("model dimensions must be positive".into()));
        }
        let mut rng = SplitMix64::new(derive_seed(seed, "rnn_init"));
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.uniform(-0.1, 0.1)).collect() };
        let layers = (0..layer_count)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { hidden_dim };
                Layer {
                    in_dim,
                    w_in: draw(hidden_dim * in_dim),
                    w_rec: draw(hidden_dim * hidden_dim),
                    bias: draw(hidden_dim),
                }
            })
            .collect();
        Ok(Self {
            input_dim,
            hidden_dim,
            activation,
            layers,
            w_out: draw(2 * hidden_dim),
            b_out: [0.0, 0.0],
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w_in.len() + l.w_rec.len() + l.bias.len())
            .sum::<usize>()
            + self.w_out.len()
            + 2
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.w_in);
            out.extend_from_slice(&layer.w_rec);
            out.extend_from_slice(&layer.bias);
        }
        out.extend_from_slice(&self.w_out);
        out.extend_from_slice(&self.b_out);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Learn(format!(
                "parameter block holds {} values, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[pos..pos + dst.len()]);
            pos += dst.len();
        };
        for layer in &mut self.layers {
            take(&mut layer.w_in);
            take(&mut layer.w_rec);
            take(&mut layer.bias);
        }
        take(&mut self.w_out);
        take(&mut self.b_out);
        Ok(())
    }
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

struct ForwardCache {
    /// preacts[l][t * hidden + j]
    preacts: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
    probs: [f64; 2],
}

fn forward_cached(model: &RecurrentModel, sequence: &[f64]) -> Result<ForwardCache> {
    if sequence.is_empty() {
        return Err(Error::Learn("sequence must have length >= 1".into()));
    }
    if model.input_dim != 1 {
        return Err(Error::Learn(format!(
            "scalar sequences need input_dim 1, model has {}",
            model.input_dim
        )));
    }
    let h = model.hidden_dim;
    let t_len = sequence.len();
    let mut preacts = vec![vec![0.0; t_len * h]; model.layers.len()];
    let mut hiddens = vec![vec![0.0; t_len * h]; model.layers.len()];

    for t in 0..t_len {
        for (l, layer) in model.layers.iter().enumerate() {
            for j in 0..h {
                let mut a = layer.bias[j];
                if l == 0 {
                    a += layer.w_in[j] * sequence[t];
                } else {
                    let below = &hiddens[l - 1][t * h..(t + 1) * h];
                    for (i, x) in below.iter().enumerate() {
                        a += layer.w_in[j * layer.in_dim + i] * x;
                    }
                }
                if t > 0 {
                    for i in 0..h {
                        a += layer.w_rec[j * h + i] * hiddens[l][(t - 1) * h + i];
                    }
                }
                preacts[l][t * h + j] = a;
                hiddens[l][t * h + j] = model.activation.apply(a);
            }
        }
    }

    let last = &hiddens[model.layers.len() - 1][(t_len - 1) * h..t_len * h];
    let mut logits = model.b_out;
    for c in 0..2 {
        for (j, x) in last.iter().enumerate() {
            logits[c] += model.w_out[c * h + j] * x;
        }
    }
    Ok(ForwardCache {
        preacts,
        hiddens,
        probs: softmax2(logits),
    })
}

/// Class probabilities for one scalar sequence.
pub fn rnn_forward(model: &RecurrentModel, sequence: &[f64]) -> Result<[f64; 2]> {
    Ok(forward_cached(model, sequence)?.probs)
}

/// Predicted label: the argmax class.
pub fn rnn_predict(model: &RecurrentModel, sequence: &[f64]) -> Result<u8> {
    let probs = rnn_forward(model, sequence)?;
    Ok(u8::from(probs[1] >= probs[0]))
}

/// Gradients in the same flat layout as [`RecurrentModel::params_flat`].
struct Gradients {
    flat: Vec<f64>,
    /// (w_in offset, w_rec offset, bias offset) per layer, then w_out, b_out.
    offsets: Vec<(usize, usize, usize)>,
    w_out_off: usize,
    b_out_off: usize,
}

impl Gradients {
    fn zeros(model: &RecurrentModel) -> Self {
        let mut offsets = Vec::with_capacity(model.layers.len());
        let mut pos = 0;
        for layer in &model.layers {
            let w_in = pos;
            pos += layer.w_in.len();
            let w_rec = pos;
            pos += layer.w_rec.len();
            let bias = pos;
            pos += layer.bias.len();
            offsets.push((w_in, w_rec, bias));
        }
        let w_out_off = pos;
        pos += model.w_out.len();
        let b_out_off = pos;
        pos += 2;
        Self {
            flat: vec![0.0; pos],
            offsets,
            w_out_off,
            b_out_off,
        }
    }
}

/// Cross-entropy loss of one sample and, when `grads` is given, its full
/// BPTT gradient added into the accumulator.
fn backward(
    model: &RecurrentModel,
    sequence: &[f64],
    label: u8,
    grads: Option<&mut Gradients>,
) -> Result<f64> {
    let cache = forward_cached(model, sequence)?;
    let p = cache.probs[label as usize].max(1e-300);
    let loss = -p.ln();
    let Some(grads) = grads else {
        return Ok(loss);
    };

    let h = model.hidden_dim;
    let t_len = sequence.len();
    let l_count = model.layers.len();
    let act = model.activation;

    // d loss / d logits = probs - onehot.
    let mut dlogits = cache.probs;
    dlogits[label as usize] -= 1.0;

    let last = &cache.hiddens[l_count - 1][(t_len - 1) * h..t_len * h];
    for c in 0..2 {
        for j in 0..h {
            grads.flat[grads.w_out_off + c * h + j] += dlogits[c] * last[j];
        }
        grads.flat[grads.b_out_off + c] += dlogits[c];
    }

    // Gradient flowing into h_l^{t+1} through the recurrence, per layer.
    let mut carry = vec![vec![0.0f64; h]; l_count];
    // da of the layer above at the current step.
    let mut da_above = vec![0.0f64; h];

    for t in (0..t_len).rev() {
        for l in (0..l_count).rev() {
            let layer = &model.layers[l];
            let mut dh = std::mem::replace(&mut carry[l], vec![0.0; h]);
            if l == l_count - 1 {
                if t == t_len - 1 {
                    for j in 0..h {
                        for c in 0..2 {
                            dh[j] += model.w_out[c * h + j] * dlogits[c];
                        }
                    }
                }
            } else {
                // From the layer above at this step: W_in_above^T . da_above.
                let above = &model.layers[l + 1];
                for j in 0..h {
                    for (k, da) in da_above.iter().enumerate() {
                        dh[j] += above.w_in[k * above.in_dim + j] * da;
                    }
                }
            }

            let mut da = vec![0.0f64; h];
            for j in 0..h {
                da[j] = dh[j]
                    * act.derivative(cache.preacts[l][t * h + j], cache.hiddens[l][t * h + j]);
            }

            let (w_in_off, w_rec_off, bias_off) = grads.offsets[l];
            for j in 0..h {
                if l == 0 {
                    grads.flat[w_in_off + j] += da[j] * sequence[t];
                } else {
                    let below = &cache.hiddens[l - 1][t * h..(t + 1) * h];
                    for (i, x) in below.iter().enumerate() {
                        grads.flat[w_in_off + j * layer.in_dim + i] += da[j] * x;
                    }
                }
                if t > 0 {
                    for i in 0..h {
                        grads.flat[w_rec_off + j * h + i] +=
                            da[j] * cache.hiddens[l][(t - 1) * h + i];
                    }
                }
                grads.flat[bias_off + j] += da[j];
            }

            // Carry to t-1 through the recurrence: W_rec^T . da.
            if t > 0 {
                let slot = &mut carry[l];
                for i in 0..h {
                    for (j, d) in da.iter().enumerate() {
                        slot[i] += layer.w_rec[j * h + i] * d;
                    }
                }
            }
            da_above = da;
        }
    }
    Ok(loss)
}

/// Smallest pre-activation magnitude of a forward pass; relu gradient
/// checks need this to stay clear of the kink.
pub fn min_preactivation_magnitude(model: &RecurrentModel, sequence: &[f64]) -> Result<f64> {
    let cache = forward_cached(model, sequence)?;
    Ok(cache
        .preacts
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, a| m.min(a.abs())))
}

/// Compare BPTT gradients against central finite differences over every
/// parameter; returns the largest relative error. For relu models the
/// sample must keep all pre-activations away from zero or the two-sided
/// difference straddles the kink.
pub fn gradient_check(model: &RecurrentModel, sequence: &[f64], label: u8, epsilon: f64) -> Result<f64> {
    let mut grads = Gradients::zeros(model);
    backward(model, sequence, label, Some(&mut grads))?;
    let analytic = grads.flat;

    let base = model.params_flat();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for k in 0..base.len() {
        let mut plus = base.clone();
        plus[k] += epsilon;
        probe.set_params_flat(&plus)?;
        let loss_plus = backward(&probe, sequence, label, None)?;
        let mut minus = base.clone();
        minus[k] -= epsilon;
        probe.set_params_flat(&minus)?;
        let loss_minus = backward(&probe, sequence, label, None)?;
        let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
        let a = analytic[k];
        if a.abs() < 1e-10 && numeric.abs() < 1e-10 {
            continue;
        }
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub early_stopping: bool,
    pub patience: usize,
    pub k_folds: usize,
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            base_lr: 1e-6,
            batch_size: 60,
            warmup_fraction: 0.10,
            early_stopping: true,
            patience: 3,
            k_folds: 5,
            split_ratio: 0.3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

fn mean_loss(model: &RecurrentModel, windows: &[Vec<f64>], labels: &[u8], idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in idx {
        total += backward(model, &windows[i], labels[i], None)?;
    }
    Ok(total / idx.len() as f64)
}

/// Minibatch SGD with the warm-up schedule and optional early stopping on
/// the validation loss (patience in epochs, best weights restored).
pub fn rnn_train_split(
    model: &mut RecurrentModel,
    windows: &[Vec<f64>],
    labels: &[u8],
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    if train_idx.is_empty() {
        return Err(Error::Learn("empty training set".into()));
    }
    let has = |class: u8| train_idx.iter().any(|&i| labels[i] == class);
    if !has(0) || !has(1) {
        return Err(Error::Learn("training set is missing a class".into()));
    }

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0usize;

    for epoch in 1..=config.epochs {
        let lr = lr_schedule(epoch, config.epochs, config.base_lr, config.warmup_fraction);
        let mut order = train_idx.to_vec();
        let mut rng = SplitMix64::new(derive_seed(config.seed, &format!("shuffle_{epoch}")));
        rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut grads = Gradients::zeros(model);
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += backward(model, &windows[i], labels[i], Some(&mut grads))?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Learn(format!(
                    "non-finite loss in epoch {epoch}; aborting"
                )));
            }
            epoch_loss += batch_loss;
            let scale = lr / batch.len() as f64;
            let mut params = model.params_flat();
            for (p, g) in params.iter_mut().zip(&grads.flat) {
                *p -= scale * g;
            }
            model.set_params_flat(&params)?;
        }
        let train_loss = epoch_loss / order.len() as f64;
        let val_loss = if val_idx.is_empty() {
            None
        } else {
            Some(mean_loss(model, windows, labels, val_idx)?)
        };
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
        });

        if config.early_stopping {
            if let Some(v) = val_loss {
                let improved = best.as_ref().map_or(true, |(b, _)| v < *b);
                if improved {
                    best = Some((v, model.params_flat()));
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= config.patience {
                        break;
                    }
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.set_params_flat(&params)?;
    }
    Ok(history)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RecurrentModel,
    /// History of the selected fold (or the single split).
    pub history: Vec<EpochRecord>,
    /// One report per fold when cross-validating, one otherwise.
    pub fold_reports: Vec<ScoreReport>,
    /// Pooled held-out predictions as (sample index, predicted label).
    pub val_predictions: Vec<(usize, u8)>,
}

/// Train per the configuration: a single stratified split when
/// `k_folds == 1`, otherwise k-fold cross-validation with per-fold scores.
/// Each fold starts from a fresh copy of `init`; the returned model is the
/// fold with the best macro F1 (ties to the earlier fold).
pub fn rnn_train(
    init: &RecurrentModel,
    windows: &[Vec<f64>],
    labels: &[u8],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if windows.is_empty() || windows.len() != labels.len() {
        return Err(Error::Learn("windows and labels must be non-empty and aligned".into()));
    }
    let folds = kfold(labels, config.k_folds, config.split_ratio, config.seed)?;

    let mut best: Option<(usize, f64)> = None;
    let mut models = Vec::with_capacity(folds.len());
    let mut histories = Vec::with_capacity(folds.len());
    let mut fold_reports = Vec::with_capacity(folds.len());
    let mut val_predictions = Vec::new();

    for (f, (train_idx, val_idx)) in folds.iter().enumerate() {
        let mut model = init.clone();
        let history = rnn_train_split(&mut model, windows, labels, train_idx, val_idx, config)?;

        let mut y_true = Vec::with_capacity(val_idx.len());
        let mut y_pred = Vec::with_capacity(val_idx.len());
        for &i in val_idx {
            let pred = rnn_predict(&model, &windows[i])?;
            y_true.push(labels[i]);
            y_pred.push(pred);
            val_predictions.push((i, pred));
        }
        let report = evaluation::scores(&evaluation::confusion(&y_true, &y_pred)?)?;
        if best.map_or(true, |(_, f1)| report.f1_macro > f1) {
            best = Some((f, report.f1_macro));
        }
        fold_reports.push(report);
        models.push(model);
        histories.push(history);
    }

    let (best_fold, _) = best.expect("at least one fold");
    Ok(TrainOutcome {
        model: models.swap_remove(best_fold),
        history: histories.swap_remove(best_fold),
        fold_reports,
        val_predictions,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct RnnManifest {
    version: u32,
    kind: String,
    input_dim: usize,
    hidden_dim: usize,
    layer_count: usize,
    activation: Activation,
    param_count: usize,
}

/// Persist as `<base>.manifest.json` + `<base>.f64`.
pub fn save_rnn(model: &RecurrentModel, base: &Path) -> Result<()> {
    let manifest = RnnManifest {
        version: 1,
        kind: "rnn".into(),
        input_dim: model.input_dim,
        hidden_dim: model.hidden_dim,
        layer_count: model.layers.len(),
        activation: model.activation,
        param_count: model.param_count(),
    };
    std::fs::write(
        base.with_extension("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    write_f64_block(&base.with_extension("f64"), &model.params_flat())
}

pub fn load_rnn(base: &Path) -> Result<RecurrentModel> {
    let manifest: RnnManifest =
        serde_json::from_str(&std::fs::read_to_string(base.with_extension("manifest.json"))?)?;
    if manifest.version != 1 || manifest.kind != "rnn" {
        return Err(Error::Learn(format!(
            "unsupported model container (version {}, kind '{}')",
            manifest.version, manifest.kind
        )));
    }
    let mut model = RecurrentModel::init(
        manifest.input_dim,
        manifest.hidden_dim,
        manifest.layer_count,
        manifest.activation,
        0,
    )?;
    let params = read_f64_block(&base.with_extension("f64"), manifest.param_count)?;
    model.set_params_flat(&params)?;
    Ok(model)
}
