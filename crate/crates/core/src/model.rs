//! The forecasting model: input normalisation, scalar projections around the
//! Transformer, the persistence skip/gate wrapper and decoding.
//!
//! With `SkipMode::SkipGate` the wrapper computes `h(z) = z + alpha * g(z)`
//! with `alpha = 0` at construction, so an untrained model predicts that the
//! next value equals the current one.

use pitf_tensor::{no_grad, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::transformer::{fan_in_uniform, sinusoidal_table, PosEncoding, Transformer, TransformerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipMode {
    /// `h(z) = g(z)`
    None,
    /// `h(z) = z + g(z)`
    SkipOnly,
    /// `h(z) = z + alpha * g(z)`, `alpha` initialised to 0.
    SkipGate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PIConfig {
    pub horizon: usize,
    pub window_multiple: usize,
    pub skip_mode: SkipMode,
    pub transformer: TransformerConfig,
}

impl PIConfig {
    pub fn input_len(&self) -> usize {
        self.horizon * self.window_multiple
    }

    pub fn window_len(&self) -> usize {
        self.input_len() + self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.window_multiple == 0 {
            return Err(Error::Config("horizon and window multiple must be positive".into()));
        }
        self.transformer.validate()
    }

    /// Scalar parameter count of the full model.
    pub fn parameter_count(&self) -> usize {
        let gate = usize::from(self.skip_mode == SkipMode::SkipGate);
        2 * self.transformer.d_model + gate + self.transformer.parameter_count()
    }
}

/// Scale of one window: mean of the H most recent input values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationState {
    pub mu: f64,
}

impl NormalizationState {
    /// `inputs` is the input portion of a window; only its last `horizon`
    /// values are used.
    pub fn from_inputs(inputs: &[f64], horizon: usize) -> Self {
        let tail = &inputs[inputs.len().saturating_sub(horizon)..];
        NormalizationState {
            mu: tail.iter().sum::<f64>() / tail.len() as f64,
        }
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > 0.0 && v.is_finite() {
                    Ok((v / self.mu).ln())
                } else {
                    Err(Error::Data(format!("value {v} at position {i} is not strictly positive")))
                }
            })
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| self.mu * v.exp()).collect()
    }
}

/// `z = ln(x / mu_H)` for an input window `x` (at least `horizon` values).
pub fn normalize(x: &[f64], horizon: usize) -> Result<(Vec<f64>, NormalizationState)> {
    if horizon == 0 || x.len() < horizon {
        return Err(Error::Data(format!(
            "window of length {} is shorter than the horizon {horizon}",
            x.len()
        )));
    }
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Data(format!("value {v} at position {i} is not strictly positive")));
    }
    let state = NormalizationState::from_inputs(x, horizon);
    Ok((state.apply(x)?, state))
}

/// `mu * exp(z)` row by row; `z` is `[batch, k]` and `mu` has one entry per
/// row. Differentiable in `z`.
pub fn denormalize(z: &Tensor, mu: &[f64]) -> Result<Tensor> {
    let rows = mu.len();
    if z.rank() != 2 || z.shape()[0] != rows {
        return Err(Error::Config(format!(
            "denormalize expects [{rows}, k], got {:?}",
            z.shape()
        )));
    }
    let k = z.shape()[1];
    let scale: Vec<f64> = mu.iter().flat_map(|&m| std::iter::repeat_n(m, k)).collect();
    Ok(z.exp().mul(&Tensor::new(z.shape(), scale)?)?)
}

#[derive(Debug, Clone)]
pub struct PIModel {
    pub config: PIConfig,
    /// `[1, d_model]`
    pub w_in: Tensor,
    /// `[d_model, 1]`
    pub w_out: Tensor,
    /// Global gate; present only for `SkipMode::SkipGate`.
    pub alpha: Option<Tensor>,
    pub transformer: Transformer,
}

impl PIModel {
    /// Fresh model. Projections and Transformer weights are drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; biases, ReZero gates and the
    /// global gate start at zero.
    pub fn new(config: PIConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.transformer.d_model;
        let w_in = fan_in_uniform(rng, 1, d)?;
        let w_out = fan_in_uniform(rng, d, 1)?;
        let transformer = Transformer::new(config.transformer.clone(), rng)?;
        let alpha = match config.skip_mode {
            SkipMode::SkipGate => Some(Tensor::parameter(&[1], vec![0.0])?),
            _ => None,
        };
        Ok(PIModel {
            config,
            w_in,
            w_out,
            alpha,
            transformer,
        })
    }

    /// `g(z) = Transformer(z W_in [+ E]) W_out` for `z` of shape `[batch, len]`.
    pub fn inner(&self, z: &Tensor) -> Result<Tensor> {
        let (batch, len) = (z.shape()[0], z.shape()[1]);
        let d = self.config.transformer.d_model;
        let mut x = z.reshape(&[batch, len, 1])?.matmul(&self.w_in)?;
        if self.config.transformer.pos_encoding == PosEncoding::Sinusoidal {
            let table = sinusoidal_table(len, d);
            let tiled: Vec<f64> = std::iter::repeat_n(table, batch).flatten().collect();
            x = x.add_constant(&tiled)?;
        }
        let y = self.transformer.forward(&x)?;
        Ok(y.matmul(&self.w_out)?.reshape(&[batch, len])?)
    }

    /// One-step-ahead predictions in normalised space: output `t` predicts
    /// position `t + 1`.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        if z.rank() != 2 {
            return Err(Error::Config(format!("expected [batch, len], got {:?}", z.shape())));
        }
        let g = self.inner(z)?;
        match self.config.skip_mode {
            SkipMode::None => Ok(g),
            SkipMode::SkipOnly => Ok(z.add(&g)?),
            SkipMode::SkipGate => {
                let alpha = self.alpha.as_ref().expect("gate present in skip_gate mode");
                Ok(z.add(&g.scale_by(alpha)?)?)
            }
        }
    }

    /// H raw predictions per window with teacher forcing.
    ///
    /// Each window holds `nH + H` raw values; it is normalised with the mean
    /// of the last H input values, positions `0..nH+H-1` are fed, and the
    /// outputs at `nH-1..nH+H-1` (predicting the H targets) are
    /// denormalised. Returns `[batch, H]`, differentiable.
    pub fn teacher_forced(&self, batch: &WindowBatch) -> Result<Tensor> {
        let (n_in, h) = (batch.input_len, batch.horizon);
        let fed = n_in + h - 1;
        let mut z = Vec::with_capacity(batch.len() * fed);
        for i in 0..batch.len() {
            let state = NormalizationState { mu: batch.mu[i] };
            z.extend(state.apply(&batch.window(i)[..fed])?);
        }
        let z = Tensor::new(&[batch.len(), fed], z)?;
        let out = self.forward(&z)?.slice(1, n_in - 1..fed)?;
        denormalize(&out, &batch.mu)
    }

    /// Teacher-forced predictions for raw sub-sequences of length `nH + H`.
    pub fn teacher_forced_predictions(&self, subseqs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let (n_in, h) = (self.config.input_len(), self.config.horizon);
        let mut batch = WindowBatch {
            input_len: n_in,
            horizon: h,
            windows: Vec::new(),
            mask: Vec::new(),
            mu: Vec::new(),
            series: Vec::new(),
            starts: Vec::new(),
        };
        for (i, s) in subseqs.iter().enumerate() {
            if s.len() != n_in + h {
                return Err(Error::Data(format!(
                    "sub-sequence {i} has length {}, expected {}",
                    s.len(),
                    n_in + h
                )));
            }
            normalize(&s[..n_in], h)?;
            batch.windows.extend_from_slice(s);
            batch.mask.extend(std::iter::repeat_n(true, s.len()));
            batch.mu.push(NormalizationState::from_inputs(&s[..n_in], h).mu);
            batch.series.push(i);
            batch.starts.push(0);
        }
        let out = no_grad(|| self.teacher_forced(&batch))?;
        Ok(out.data().chunks(h).map(<[f64]>::to_vec).collect())
    }

    /// Autoregressive H-step forecasts for a batch of raw input windows of
    /// length `nH`. `mu` is fixed from each input window; every step feeds the
    /// whole (growing) normalised sequence and appends the last output.
    pub fn forecast_batch(&self, windows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let (n_in, h) = (self.config.input_len(), self.config.horizon);
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let mut seqs = Vec::with_capacity(windows.len());
        let mut states = Vec::with_capacity(windows.len());
        for w in windows {
            if w.len() != n_in {
                return Err(Error::Data(format!("input window has length {}, expected {n_in}", w.len())));
            }
            let (z, state) = normalize(w, h)?;
            seqs.push(z);
            states.push(state);
        }
        let b = windows.len();
        let mut generated = vec![Vec::with_capacity(h); b];
        no_grad(|| -> Result<()> {
            for step in 0..h {
                let len = seqs[0].len();
                let z = Tensor::new(&[b, len], seqs.concat())?;
                let out = self.forward(&z)?;
                for (i, seq) in seqs.iter_mut().enumerate() {
                    let next = out.data()[i * len + len - 1];
                    if !next.is_finite() {
                        return Err(Error::NonFiniteForecast { step });
                    }
                    seq.push(next);
                    generated[i].push(next);
                }
            }
            Ok(())
        })?;
        let mut forecasts = Vec::with_capacity(b);
        for (state, z) in states.iter().zip(&generated) {
            let raw = state.invert(z);
            if let Some(step) = raw.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteForecast { step });
            }
            forecasts.push(raw);
        }
        Ok(forecasts)
    }

    /// Autoregressive H-step forecast of one raw window of length `nH`.
    pub fn forecast(&self, window: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forecast_batch(&[window.to_vec()])?.remove(0))
    }

    /// Named trainable tensors in a fixed order.
    pub fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("w_in".to_string(), &self.w_in), ("w_out".to_string(), &self.w_out)];
        if let Some(a) = &self.alpha {
            out.push(("alpha".to_string(), a));
        }
        out.extend(
            self.transformer
                .parameters()
                .into_iter()
                .map(|(n, t)| (format!("transformer.{n}"), t)),
        );
        out
    }

    /// Mutable access in the order of [`PIModel::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.w_in, &mut self.w_out];
        if let Some(a) = &mut self.alpha {
            out.push(a);
        }
        out.extend(self.transformer.parameters_mut());
        out
    }

    pub fn gate(&self) -> Option<f64> {
        self.alpha.as_ref().map(|a| a.data()[0])
    }

    pub fn zero_grad(&self) {
        for (_, p) in self.parameters() {
            p.zero_grad();
        }
    }
}
