//! Training: window-scaled MASE loss, the Lamb optimiser, global gradient
//! clipping, early stopping and the epoch loop.

use std::time::Instant;

use pitf_tensor::{no_grad, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_batch, SeriesRecord, SplitPlan, WindowBatch};
use crate::error::{Error, Result};
use crate::model::PIModel;

/// Windows whose in-sample scale falls below this are left out of the loss.
pub const MIN_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for LambConfig {
    fn default() -> Self {
        LambConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub patience: usize,
    pub grad_clip_norm: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Rows per forward/backward pass; gradients of a batch are accumulated
    /// over micro-batches, which bounds memory without changing the update.
    pub micro_batch: usize,
    pub lamb: LambConfig,
}

impl TrainConfig {
    /// 128 mini-batches of 1024 windows per epoch, patience 8, at most 100 epochs.
    pub fn paper() -> Self {
        TrainConfig {
            batch_size: 1024,
            batches_per_epoch: 128,
            patience: 8,
            grad_clip_norm: 10.0,
            max_epochs: 100,
            seed: 0,
            micro_batch: 32,
            lamb: LambConfig::default(),
        }
    }

    /// Reduced schedule for a single CPU: 32 mini-batches of 128 windows.
    ///
    /// The trust ratio scales every step by the tensor's own norm, so the
    /// zero-initialized gates grow roughly by a factor `1 + lr` per step. With
    /// under a thousand steps the default rate leaves them near zero; 3e-2
    /// opens them but then destabilizes the weight matrices.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 128,
            batches_per_epoch: 32,
            max_epochs: 30,
            lamb: LambConfig {
                lr: 1e-2,
                ..LambConfig::default()
            },
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("batches_per_epoch", self.batches_per_epoch),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
            ("micro_batch", self.micro_batch),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        let l = &self.lamb;
        let ok = self.grad_clip_norm > 0.0
            && l.lr > 0.0
            && (0.0..1.0).contains(&l.beta1)
            && (0.0..1.0).contains(&l.beta2)
            && l.eps > 0.0
            && l.weight_decay >= 0.0;
        if !ok {
            return Err(Error::Config(
                "clip norm, learning rate and epsilon must be positive and betas in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// In-sample scale of a window: mean `|x_j - x_{j-S}|` over input positions
/// where both values are real observations. `None` when no such pair exists
/// or the scale is below [`MIN_SCALE`].
pub fn window_scale(inputs: &[f64], mask: &[bool], seasonality: usize) -> Option<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for j in seasonality..inputs.len() {
        if mask[j] && mask[j - seasonality] {
            total += (inputs[j] - inputs[j - seasonality]).abs();
            count += 1;
        }
    }
    let scale = total / count.max(1) as f64;
    (count > 0 && scale >= MIN_SCALE).then_some(scale)
}

/// Per-element loss weights for a batch, `[len, H]`, such that
/// `sum(weights * |pred - target|)` is the mean window MASE over the windows
/// that are not excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub weights: Vec<f64>,
    pub included: usize,
    pub excluded: usize,
}

pub fn loss_weights(batch: &WindowBatch, seasonality: usize) -> Result<LossWeights> {
    if seasonality == 0 {
        return Err(Error::Config("seasonality must be at least 1".into()));
    }
    let (n_in, h) = (batch.input_len, batch.horizon);
    let mut per_window = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (w, m) = (batch.window(i), batch.window_mask(i));
        let real_targets = m[n_in..].iter().filter(|&&b| b).count();
        let scale = window_scale(&w[..n_in], &m[..n_in], seasonality).filter(|_| real_targets > 0);
        per_window.push(scale.map(|s| (s, real_targets)));
    }
    let included = per_window.iter().flatten().count();
    let excluded = batch.len() - included;
    let mut weights = vec![0.0; batch.len() * h];
    for (i, entry) in per_window.iter().enumerate() {
        if let Some((scale, real)) = entry {
            let m = &batch.window_mask(i)[n_in..];
            for k in 0..h {
                if m[k] {
                    weights[i * h + k] = 1.0 / (included as f64 * *real as f64 * scale);
                }
            }
        }
    }
    Ok(LossWeights {
        weights,
        included,
        excluded,
    })
}

/// Weighted absolute error `sum(weights * |predictions - targets|)`.
pub fn weighted_abs_error(predictions: &Tensor, targets: &[f64], weights: &[f64]) -> Result<Tensor> {
    let shape = predictions.shape().to_vec();
    let diff = predictions.sub(&Tensor::new(&shape, targets.to_vec())?)?.abs();
    Ok(diff.mul(&Tensor::new(&shape, weights.to_vec())?)?.sum())
}

/// Mean window MASE of raw predictions `[len, H]` for `batch`; the value is
/// differentiable in `predictions`. Zero when every window is excluded.
pub fn mase_loss(predictions: &Tensor, batch: &WindowBatch, seasonality: usize) -> Result<(Tensor, LossWeights)> {
    let w = loss_weights(batch, seasonality)?;
    let loss = weighted_abs_error(predictions, &batch.targets(), &w.weights)?;
    Ok((loss, w))
}

/// Global L2 norm of a set of gradients.
pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales all gradients by `max_norm / norm` when their global norm exceeds
/// `max_norm`. Returns the factor applied (1 when untouched).
pub fn clip_gradients(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm <= max_norm {
        return 1.0;
    }
    let factor = max_norm / norm;
    grads.iter_mut().flatten().for_each(|g| *g *= factor);
    factor
}

/// Adam-style moments of every parameter tensor plus the shared step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(sizes: &[usize]) -> Self {
        OptimizerState {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// Lamb update of one tensor at step `t` (1-based). Updates the moments in
/// place and returns the new weights.
pub fn lamb_update(w: &[f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &LambConfig) -> Vec<f64> {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    let mut update = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        update.push(m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * w[i]);
    }
    let w_norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u_norm = update.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ratio = if w_norm > 0.0 && u_norm > 0.0 { w_norm / u_norm } else { 1.0 };
    w.iter().zip(&update).map(|(x, u)| x - cfg.lr * ratio * u).collect()
}

/// One Lamb step over every parameter of `model` with the given (clipped)
/// gradients. Parameters are replaced by fresh leaves.
pub fn lamb_step(model: &mut PIModel, grads: &[Vec<f64>], state: &mut OptimizerState, cfg: &LambConfig) -> Result<()> {
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    for (name, g) in names.iter().zip(grads) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    state.step += 1;
    for (i, p) in model.parameters_mut().into_iter().enumerate() {
        let new = lamb_update(p.data(), &grads[i], &mut state.m[i], &mut state.v[i], state.step, cfg);
        *p = Tensor::parameter(p.shape(), new)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: usize,
    pub bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if self.best.is_none_or(|b| loss < b) {
            self.best = Some(loss);
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            return StopDecision::Improved;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// One line of the training history. Everything here is a deterministic
/// function of the configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss_mean: f64,
    pub train_loss_std: f64,
    pub validation_loss: Option<f64>,
    pub gate: Option<f64>,
    pub rezero_alphas: Vec<f64>,
    pub excluded_windows: usize,
    pub clipped_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub epoch: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the best monitored loss.
    pub model: PIModel,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub history: Vec<EpochRecord>,
    pub timings: Vec<EpochTiming>,
    pub stopped_early: bool,
}

/// Teacher-forced MASE over `batch` without recording a graph, processed in
/// chunks of `chunk` rows. Returns the loss and the excluded-window count.
pub fn evaluate_loss(model: &PIModel, batch: &WindowBatch, seasonality: usize, chunk: usize) -> Result<(f64, usize)> {
    let w = loss_weights(batch, seasonality)?;
    let targets = batch.targets();
    let h = batch.horizon;
    let mut total = 0.0;
    no_grad(|| -> Result<()> {
        for start in (0..batch.len()).step_by(chunk.max(1)) {
            let end = (start + chunk).min(batch.len());
            let pred = model.teacher_forced(&batch.rows(start..end))?;
            let part = weighted_abs_error(&pred, &targets[start * h..end * h], &w.weights[start * h..end * h])?;
            total += part.item()?;
        }
        Ok(())
    })?;
    Ok((total, w.excluded))
}

/// Forward/backward over one batch with gradient accumulation; returns the
/// batch loss and the number of excluded windows. Leaves gradients on the
/// model's parameters.
fn accumulate_batch(model: &PIModel, batch: &WindowBatch, seasonality: usize, micro: usize) -> Result<(f64, usize)> {
    let w = loss_weights(batch, seasonality)?;
    let targets = batch.targets();
    let h = batch.horizon;
    let mut total = 0.0;
    for start in (0..batch.len()).step_by(micro) {
        let end = (start + micro).min(batch.len());
        let pred = model.teacher_forced(&batch.rows(start..end))?;
        let loss = weighted_abs_error(&pred, &targets[start * h..end * h], &w.weights[start * h..end * h])?;
        loss.backward()?;
        total += loss.item()?;
    }
    Ok((total, w.excluded))
}

fn collect_grads(model: &PIModel) -> Vec<Vec<f64>> {
    model
        .parameters()
        .iter()
        .map(|(_, p)| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sampler seed stream kept apart from the initialisation stream.
pub fn sampler_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Trains `model` on the windows of `plan`. The validation loss (teacher-forced
/// MASE over the validation windows) drives early stopping; when no series
/// has a validation window the epoch's mean training loss is monitored
/// instead. `on_epoch` sees every history record as it is produced.
pub fn train(
    mut model: PIModel,
    records: &[SeriesRecord],
    plan: &SplitPlan,
    seasonality: usize,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &EpochTiming),
) -> Result<TrainOutcome> {
    config.validate()?;
    if plan.input_len != model.config.input_len() || plan.horizon != model.config.horizon {
        return Err(Error::Config("split plan does not match the model's window shape".into()));
    }
    if plan.train_window_count() == 0 {
        return Err(Error::Config("no usable training windows".into()));
    }
    let validation = (plan.validation_count() > 0).then(|| plan.validation_batch(records));
    let mut rng = sampler_rng(config.seed);
    let sizes: Vec<usize> = model.parameters().iter().map(|(_, p)| p.numel()).collect();
    let mut state = OptimizerState::new(&sizes);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut timings = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut losses = Vec::with_capacity(config.batches_per_epoch);
        let mut excluded = 0;
        let mut clipped = 0;
        for b in 0..config.batches_per_epoch {
            let batch = sample_batch(plan, records, config.batch_size, &mut rng);
            model.zero_grad();
            let (loss, skipped) = accumulate_batch(&model, &batch, seasonality, config.micro_batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    what: "training loss",
                    epoch,
                    batch: b,
                });
            }
            let mut grads = collect_grads(&model);
            model.zero_grad();
            if clip_gradients(&mut grads, config.grad_clip_norm) < 1.0 {
                clipped += 1;
            }
            lamb_step(&mut model, &grads, &mut state, &config.lamb)?;
            losses.push(loss);
            excluded += skipped;
        }
        let (train_mean, train_std) = mean_std(&losses);
        let validation_loss = match &validation {
            Some(v) => {
                let (loss, _) = evaluate_loss(&model, v, seasonality, config.micro_batch)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        what: "validation loss",
                        epoch,
                        batch: 0,
                    });
                }
                Some(loss)
            }
            None => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss_mean: train_mean,
            train_loss_std: train_std,
            validation_loss,
            gate: model.gate(),
            rezero_alphas: model.transformer.rezero_alphas(),
            excluded_windows: excluded,
            clipped_batches: clipped,
        };
        let timing = EpochTiming {
            epoch,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record, &timing);
        history.push(record);
        timings.push(timing);
        let decision = stopper.observe(epoch, validation_loss.unwrap_or(train_mean));
        if decision == StopDecision::Improved {
            best = model.clone();
        }
        if decision == StopDecision::Stop {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch: stopper.best_epoch,
        best_loss: stopper.best.unwrap_or(f64::NAN),
        history,
        timings,
        stopped_early,
    })
}
