//! Decoder-only Transformer stack with causal multi-head self-attention,
//! position-wise feed-forward layers and a selectable residual connector.

use pitf_tensor::{Tensor, TensorError};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// How each sublayer is wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connector {
    /// `x + alpha_l * f(x)` with `alpha_l` starting at zero.
    Rezero,
    /// `x + f(LayerNorm(x))`, followed by a final LayerNorm after the stack.
    PreLn,
    /// `LayerNorm(x + f(x))`.
    PostLn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosEncoding {
    Rotary,
    Sinusoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub connector: Connector,
    pub pos_encoding: PosEncoding,
}

impl TransformerConfig {
    /// 4 layers, 4 heads, `d_ff = 4 * d_model`, ReZero and rotary encoding.
    pub fn with_width(d_model: usize) -> Self {
        TransformerConfig {
            n_layers: 4,
            n_heads: 4,
            d_model,
            d_ff: 4 * d_model,
            connector: Connector::Rezero,
            pos_encoding: PosEncoding::Rotary,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::Config("transformer sizes must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.pos_encoding == PosEncoding::Rotary && !self.head_dim().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "rotary encoding needs an even head dimension, got {}",
                self.head_dim()
            )));
        }
        Ok(())
    }

    /// Number of scalar parameters in the stack.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let attention = 4 * d * d;
        let feed_forward = d * self.d_ff + self.d_ff + self.d_ff * d + d;
        let connector = match self.connector {
            Connector::Rezero => 1,
            Connector::PreLn | Connector::PostLn => 4 * d,
        };
        let final_norm = if self.connector == Connector::PreLn { 2 * d } else { 0 };
        self.n_layers * (attention + feed_forward + connector) + final_norm
    }
}

/// Gain/bias pair of a LayerNorm.
#[derive(Debug, Clone)]
pub struct NormParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl NormParams {
    fn new(width: usize) -> Result<Self> {
        Ok(NormParams {
            gain: Tensor::parameter(&[width], vec![1.0; width])?,
            bias: Tensor::parameter(&[width], vec![0.0; width])?,
        })
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.layer_norm(&self.gain, &self.bias, LAYER_NORM_EPS)?)
    }
}

#[derive(Debug, Clone)]
pub enum ConnectorParams {
    /// One scalar shared by the layer's attention and feed-forward sublayers.
    Rezero { alpha: Tensor },
    LayerNorm { attention: NormParams, feed_forward: NormParams },
}

/// Parameters of one decoder layer. The per-head projections are stored
/// side by side: columns `h*d_qk..(h+1)*d_qk` of `w_q` form head `h`.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub w_1: Tensor,
    pub b_1: Tensor,
    pub w_2: Tensor,
    pub b_2: Tensor,
    pub connector: ConnectorParams,
}

/// Uniform `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` matrix.
pub(crate) fn fan_in_uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Result<Tensor> {
    let bound = 1.0 / (rows as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Ok(Tensor::parameter(&[rows, cols], data)?)
}

impl LayerParams {
    fn init(config: &TransformerConfig, rng: &mut impl Rng) -> Result<Self> {
        let (d, ff) = (config.d_model, config.d_ff);
        let connector = match config.connector {
            Connector::Rezero => ConnectorParams::Rezero {
                alpha: Tensor::parameter(&[1], vec![0.0])?,
            },
            Connector::PreLn | Connector::PostLn => ConnectorParams::LayerNorm {
                attention: NormParams::new(d)?,
                feed_forward: NormParams::new(d)?,
            },
        };
        Ok(LayerParams {
            w_q: fan_in_uniform(rng, d, d)?,
            w_k: fan_in_uniform(rng, d, d)?,
            w_v: fan_in_uniform(rng, d, d)?,
            w_o: fan_in_uniform(rng, d, d)?,
            w_1: fan_in_uniform(rng, d, ff)?,
            b_1: Tensor::parameter(&[ff], vec![0.0; ff])?,
            w_2: fan_in_uniform(rng, ff, d)?,
            b_2: Tensor::parameter(&[d], vec![0.0; d])?,
            connector,
        })
    }
}

/// Sinusoidal position table `E[i][j]`: `sin(i / 10000^(j/d))` for even `j`,
/// `cos(i / 10000^((j-1)/d))` for odd `j`. Row-major `[len, d_model]`.
pub fn sinusoidal_table(len: usize, d_model: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(len * d_model);
    for i in 0..len {
        for j in 0..d_model {
            let exponent = (j - j % 2) as f64 / d_model as f64;
            let angle = i as f64 / 10_000f64.powf(exponent);
            table.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    table
}

fn tag_layer(layer: usize) -> impl Fn(TensorError) -> Error {
    move |e| match e {
        TensorError::NonFinite { .. } => Error::NonFiniteLayer { layer },
        other => Error::Tensor(other),
    }
}

/// `ReLU(x W_1 + b_1) W_2 + b_2`, applied to every position independently.
pub fn feed_forward(x: &Tensor, p: &LayerParams) -> Result<Tensor> {
    let hidden = x.matmul(&p.w_1)?.add_bias(&p.b_1)?.relu();
    Ok(hidden.matmul(&p.w_2)?.add_bias(&p.b_2)?)
}

/// Causal multi-head self-attention over `[batch, len, d_model]`.
pub fn causal_self_attention(x: &Tensor, p: &LayerParams, config: &TransformerConfig) -> Result<Tensor> {
    let mut q = x.matmul(&p.w_q)?;
    let mut k = x.matmul(&p.w_k)?;
    let v = x.matmul(&p.w_v)?;
    if config.pos_encoding == PosEncoding::Rotary {
        q = q.rotary(config.head_dim())?;
        k = k.rotary(config.head_dim())?;
    }
    let heads = Tensor::causal_attention(&q, &k, &v, config.n_heads)?;
    Ok(heads.matmul(&p.w_o)?)
}

/// Masked, scaled attention scores of head `head`, `[batch, len, len]`,
/// assembled from primitive ops (before the softmax).
pub fn attention_scores(x: &Tensor, p: &LayerParams, config: &TransformerConfig, head: usize) -> Result<Tensor> {
    let dk = config.head_dim();
    let cols = head * dk..(head + 1) * dk;
    let mut q = x.matmul(&p.w_q)?;
    let mut k = x.matmul(&p.w_k)?;
    if config.pos_encoding == PosEncoding::Rotary {
        q = q.rotary(dk)?;
        k = k.rotary(dk)?;
    }
    let q = q.slice(2, cols.clone())?;
    let k = k.slice(2, cols)?;
    Ok(q.matmul(&k.transpose()?)?.scale(1.0 / (dk as f64).sqrt()).causal_mask()?)
}

/// Which sublayer a connector wraps; selects the LayerNorm parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sublayer {
    Attention,
    FeedForward,
}

/// Wraps `sublayer` according to the connector parameters.
pub fn connector_apply(
    x: &Tensor,
    params: &ConnectorParams,
    which: Sublayer,
    mode: Connector,
    sublayer: impl FnOnce(&Tensor) -> Result<Tensor>,
) -> Result<Tensor> {
    match (mode, params) {
        (Connector::Rezero, ConnectorParams::Rezero { alpha }) => Ok(x.add(&sublayer(x)?.scale_by(alpha)?)?),
        (Connector::PostLn, ConnectorParams::LayerNorm { attention, feed_forward }) => {
            let norm = if which == Sublayer::Attention { attention } else { feed_forward };
            norm.apply(&x.add(&sublayer(x)?)?)
        }
        (Connector::PreLn, ConnectorParams::LayerNorm { attention, feed_forward }) => {
            let norm = if which == Sublayer::Attention { attention } else { feed_forward };
            Ok(x.add(&sublayer(&norm.apply(x)?)?)?)
        }
        _ => Err(Error::Config(format!("connector parameters do not match mode {mode:?}"))),
    }
}

#[derive(Debug, Clone)]
pub struct Transformer {
    pub config: TransformerConfig,
    pub layers: Vec<LayerParams>,
    /// Present only for the pre-LayerNorm arm.
    pub final_norm: Option<NormParams>,
}

impl Transformer {
    pub fn new(config: TransformerConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.n_layers)
            .map(|_| LayerParams::init(&config, rng))
            .collect::<Result<_>>()?;
        let final_norm = match config.connector {
            Connector::PreLn => Some(NormParams::new(config.d_model)?),
            _ => None,
        };
        Ok(Transformer {
            config,
            layers,
            final_norm,
        })
    }

    /// `[batch, len, d_model] -> [batch, len, d_model]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 3 || x.shape()[2] != self.config.d_model {
            return Err(Error::Config(format!(
                "transformer input must be [batch, len, {}], got {:?}",
                self.config.d_model,
                x.shape()
            )));
        }
        let mode = self.config.connector;
        let mut h = x.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            let tag = tag_layer(index);
            h = connector_apply(&h, &layer.connector, Sublayer::Attention, mode, |y| {
                causal_self_attention(y, layer, &self.config).map_err(|e| match e {
                    Error::Tensor(t) => tag(t),
                    other => other,
                })
            })?;
            h = connector_apply(&h, &layer.connector, Sublayer::FeedForward, mode, |y| feed_forward(y, layer))?;
            if !h.data().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteLayer { layer: index });
            }
        }
        match &self.final_norm {
            Some(norm) => norm.apply(&h),
            None => Ok(h),
        }
    }

    /// Named trainable tensors, in a fixed order.
    pub fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let mut named: Vec<(&str, &Tensor)> = vec![
                ("w_q", &l.w_q),
                ("w_k", &l.w_k),
                ("w_v", &l.w_v),
                ("w_o", &l.w_o),
                ("w_1", &l.w_1),
                ("b_1", &l.b_1),
                ("w_2", &l.w_2),
                ("b_2", &l.b_2),
            ];
            match &l.connector {
                ConnectorParams::Rezero { alpha } => named.push(("alpha", alpha)),
                ConnectorParams::LayerNorm { attention, feed_forward } => named.extend([
                    ("attn_norm.gain", &attention.gain),
                    ("attn_norm.bias", &attention.bias),
                    ("ff_norm.gain", &feed_forward.gain),
                    ("ff_norm.bias", &feed_forward.bias),
                ]),
            }
            out.extend(named.into_iter().map(|(name, t)| (format!("layers.{i}.{name}"), t)));
        }
        if let Some(n) = &self.final_norm {
            out.push(("final_norm.gain".into(), &n.gain));
            out.push(("final_norm.bias".into(), &n.bias));
        }
        out
    }

    /// Mutable access in the same order as [`Transformer::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend([
                &mut l.w_q, &mut l.w_k, &mut l.w_v, &mut l.w_o, &mut l.w_1, &mut l.b_1, &mut l.w_2, &mut l.b_2,
            ]);
            match &mut l.connector {
                ConnectorParams::Rezero { alpha } => out.push(alpha),
                ConnectorParams::LayerNorm { attention, feed_forward } => out.extend([
                    &mut attention.gain,
                    &mut attention.bias,
                    &mut feed_forward.gain,
                    &mut feed_forward.bias,
                ]),
            }
        }
        if let Some(n) = &mut self.final_norm {
            out.extend([&mut n.gain, &mut n.bias]);
        }
        out
    }

    /// Current ReZero gates, one per layer (empty for LayerNorm arms).
    pub fn rezero_alphas(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| match &l.connector {
                ConnectorParams::Rezero { alpha } => Some(alpha.data()[0]),
                _ => None,
            })
            .collect()
    }
}
