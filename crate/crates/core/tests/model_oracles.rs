//! Independent scalar-loop oracles for the Transformer and the wrapped model.

use pitf::model::{normalize, PIConfig, PIModel, SkipMode};
use pitf::transformer::{
    attention_scores, sinusoidal_table, Connector, ConnectorParams, PosEncoding, Transformer, TransformerConfig,
};
use pitf_tensor::gradcheck::check_gradients;
use pitf_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor) -> Mat {
    let cols = *t.shape().last().unwrap();
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

fn rotate(v: &mut [f64], pos: usize) {
    let d = v.len();
    for i in 0..d / 2 {
        let theta = 10000f64.powf(-2.0 * i as f64 / d as f64);
        let (s, c) = (pos as f64 * theta).sin_cos();
        let (a, b) = (v[2 * i], v[2 * i + 1]);
        v[2 * i] = a * c - b * s;
        v[2 * i + 1] = a * s + b * c;
    }
}

fn layer_norm(row: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    row.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * gain[i] + bias[i])
        .collect()
}

/// Causal multi-head attention of one sequence, written out in loops.
fn attention_oracle(x: &Mat, l: &pitf::transformer::LayerParams, cfg: &TransformerConfig) -> Mat {
    let (len, d) = (x.len(), cfg.d_model);
    let dk = d / cfg.n_heads;
    let q = mm(x, &to_mat(&l.w_q));
    let k = mm(x, &to_mat(&l.w_k));
    let v = mm(x, &to_mat(&l.w_v));
    let mut concat = vec![vec![0.0; d]; len];
    for h in 0..cfg.n_heads {
        let head = |m: &Mat, i: usize| m[i][h * dk..(h + 1) * dk].to_vec();
        for i in 0..len {
            let mut qi = head(&q, i);
            if cfg.pos_encoding == PosEncoding::Rotary {
                rotate(&mut qi, i);
            }
            let mut scores = Vec::new();
            for j in 0..=i {
                let mut kj = head(&k, j);
                if cfg.pos_encoding == PosEncoding::Rotary {
                    rotate(&mut kj, j);
                }
                scores.push(qi.iter().zip(&kj).map(|(a, b)| a * b).sum::<f64>() / (dk as f64).sqrt());
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for (j, s) in scores.iter().enumerate() {
                let p = (s - max).exp() / z;
                for c in 0..dk {
                    concat[i][h * dk + c] += p * v[j][h * dk + c];
                }
            }
        }
    }
    mm(&concat, &to_mat(&l.w_o))
}

fn ff_oracle(x: &Mat, l: &pitf::transformer::LayerParams) -> Mat {
    let mut h = mm(x, &to_mat(&l.w_1));
    for row in &mut h {
        for (v, b) in row.iter_mut().zip(l.b_1.data()) {
            *v = (*v + b).max(0.0);
        }
    }
    let mut out = mm(&h, &to_mat(&l.w_2));
    for row in &mut out {
        for (v, b) in row.iter_mut().zip(l.b_2.data()) {
            *v += b;
        }
    }
    out
}

fn add(a: &Mat, b: &Mat, scale: f64) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + scale * y).collect())
        .collect()
}

fn norm_rows(x: &Mat, p: &pitf::transformer::NormParams) -> Mat {
    x.iter().map(|r| layer_norm(r, p.gain.data(), p.bias.data())).collect()
}

fn transformer_oracle(t: &Transformer, x: &Mat) -> Mat {
    let cfg = &t.config;
    let mut h = x.clone();
    for l in &t.layers {
        match &l.connector {
            ConnectorParams::Rezero { alpha } => {
                let a = alpha.data()[0];
                h = add(&h, &attention_oracle(&h, l, cfg), a);
                h = add(&h, &ff_oracle(&h, l), a);
            }
            ConnectorParams::LayerNorm { attention, feed_forward } => match cfg.connector {
                Connector::PostLn => {
                    h = norm_rows(&add(&h, &attention_oracle(&h, l, cfg), 1.0), attention);
                    h = norm_rows(&add(&h, &ff_oracle(&h, l), 1.0), feed_forward);
                }
                _ => {
                    h = add(&h, &attention_oracle(&norm_rows(&h, attention), l, cfg), 1.0);
                    h = add(&h, &ff_oracle(&norm_rows(&h, feed_forward), l), 1.0);
                }
            },
        }
    }
    match &t.final_norm {
        Some(n) => norm_rows(&h, n),
        None => h,
    }
}

fn randomise_gates(t: &mut Transformer, rng: &mut impl Rng) {
    for l in &mut t.layers {
        match &mut l.connector {
            ConnectorParams::Rezero { alpha } => *alpha = Tensor::parameter(&[1], vec![rng.gen_range(-1.0..1.0)]).unwrap(),
            ConnectorParams::LayerNorm { attention, feed_forward } => {
                for n in [attention, feed_forward] {
                    let w = n.gain.numel();
                    n.gain = Tensor::parameter(&[w], (0..w).map(|_| rng.gen_range(0.5..1.5)).collect()).unwrap();
                    n.bias = Tensor::parameter(&[w], (0..w).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
                }
            }
        }
        let ff = l.b_1.numel();
        l.b_1 = Tensor::parameter(&[ff], (0..ff).map(|_| rng.gen_range(-0.3..0.3)).collect()).unwrap();
    }
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn single_head_layer_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = TransformerConfig {
        n_layers: 1,
        n_heads: 1,
        d_model: 4,
        d_ff: 8,
        connector: Connector::Rezero,
        pos_encoding: PosEncoding::Rotary,
    };
    let mut t = Transformer::new(cfg, &mut rng).unwrap();
    randomise_gates(&mut t, &mut rng);
    let x = random_tensor(&mut rng, &[1, 5, 4]);
    let got = t.forward(&x).unwrap();
    let want = transformer_oracle(&t, &to_mat(&x));
    for (a, b) in got.data().iter().zip(want.iter().flatten()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn every_arm_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for connector in [Connector::Rezero, Connector::PreLn, Connector::PostLn] {
        for pos_encoding in [PosEncoding::Rotary, PosEncoding::Sinusoidal] {
            let cfg = TransformerConfig {
                n_layers: 2,
                n_heads: 2,
                d_model: 8,
                d_ff: 16,
                connector,
                pos_encoding,
            };
            let mut t = Transformer::new(cfg, &mut rng).unwrap();
            randomise_gates(&mut t, &mut rng);
            let x = random_tensor(&mut rng, &[3, 6, 8]);
            let got = t.forward(&x).unwrap();
            for b in 0..3 {
                let seq = to_mat(&x)[b * 6..(b + 1) * 6].to_vec();
                let want = transformer_oracle(&t, &seq);
                for (a, w) in got.data()[b * 48..(b + 1) * 48].iter().zip(want.iter().flatten()) {
                    assert!((a - w).abs() < 1e-11, "{connector:?}/{pos_encoding:?}: {a} vs {w}");
                }
            }
        }
    }
}

#[test]
fn attention_scores_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = TransformerConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 8,
        d_ff: 8,
        connector: Connector::Rezero,
        pos_encoding: PosEncoding::Rotary,
    };
    let t = Transformer::new(cfg.clone(), &mut rng).unwrap();
    let l = &t.layers[0];
    let x = random_tensor(&mut rng, &[1, 7, 8]);
    let xm = to_mat(&x);
    let (q, k) = (mm(&xm, &to_mat(&l.w_q)), mm(&xm, &to_mat(&l.w_k)));
    for head in 0..2 {
        let s = attention_scores(&x, l, &cfg, head).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let got = s.data()[i * 7 + j];
                if j > i {
                    assert!(got < -1e8, "future position must be masked");
                    continue;
                }
                let mut qi = q[i][head * 4..head * 4 + 4].to_vec();
                let mut kj = k[j][head * 4..head * 4 + 4].to_vec();
                rotate(&mut qi, i);
                rotate(&mut kj, j);
                let want = qi.iter().zip(&kj).map(|(a, b)| a * b).sum::<f64>() / 2.0;
                assert!((got - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn rezero_identity_at_init_is_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = Transformer::new(TransformerConfig::with_width(16), &mut rng).unwrap();
    let x = random_tensor(&mut rng, &[2, 9, 16]);
    let y = t.forward(&x).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&y), bits(&x));
}

fn pi_config(skip_mode: SkipMode, pos_encoding: PosEncoding) -> PIConfig {
    PIConfig {
        horizon: 4,
        window_multiple: 3,
        skip_mode,
        transformer: TransformerConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_ff: 32,
            connector: Connector::Rezero,
            pos_encoding,
        },
    }
}

/// A model whose gates are all non-zero so every path contributes.
fn active_model(skip_mode: SkipMode, pos_encoding: PosEncoding, seed: u64) -> PIModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = PIModel::new(pi_config(skip_mode, pos_encoding), &mut rng).unwrap();
    randomise_gates(&mut m.transformer, &mut rng);
    if m.alpha.is_some() {
        m.alpha = Some(Tensor::parameter(&[1], vec![0.7]).unwrap());
    }
    m
}

#[test]
fn pi_forward_matches_composition() {
    for skip in [SkipMode::None, SkipMode::SkipOnly, SkipMode::SkipGate] {
        for pos in [PosEncoding::Rotary, PosEncoding::Sinusoidal] {
            let m = active_model(skip, pos, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let z: Vec<f64> = (0..10).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let got = m.forward(&Tensor::new(&[1, 10], z.clone()).unwrap()).unwrap();
            // z W_in (+ E), Transformer, W_out, then the wrapper
            let w_in = m.w_in.data();
            let table = sinusoidal_table(10, 8);
            let x: Mat = (0..10)
                .map(|i| {
                    (0..8)
                        .map(|c| z[i] * w_in[c] + if pos == PosEncoding::Sinusoidal { table[i * 8 + c] } else { 0.0 })
                        .collect()
                })
                .collect();
            let g: Vec<f64> = mm(&transformer_oracle(&m.transformer, &x), &to_mat(&m.w_out))
                .into_iter()
                .map(|r| r[0])
                .collect();
            for i in 0..10 {
                let want = match skip {
                    SkipMode::None => g[i],
                    SkipMode::SkipOnly => z[i] + g[i],
                    SkipMode::SkipGate => z[i] + 0.7 * g[i],
                };
                assert!((got.data()[i] - want).abs() < 1e-11, "{skip:?}/{pos:?}");
            }
        }
    }
}

fn positive_window(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.gen_range(-2.0..4.0));
    (0..len).map(|_| scale * rng.gen_range(0.2..5.0)).collect()
}

#[test]
fn fresh_gated_model_is_persistence() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = PIModel::new(pi_config(SkipMode::SkipGate, PosEncoding::Rotary), &mut rng).unwrap();
    let windows: Vec<Vec<f64>> = (0..50).map(|_| positive_window(&mut rng, 12)).collect();
    for (w, f) in windows.iter().zip(m.forecast_batch(&windows).unwrap()) {
        let last = w[11];
        for v in f {
            assert!(((v - last) / last).abs() < 1e-9);
        }
    }
}

#[test]
fn forecast_equals_manual_loop() {
    let m = active_model(SkipMode::SkipGate, PosEncoding::Rotary, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = positive_window(&mut rng, 12);
    let (mut z, state) = normalize(&w, 4).unwrap();
    let mut manual = Vec::new();
    for _ in 0..4 {
        let out = m.forward(&Tensor::new(&[1, z.len()], z.clone()).unwrap()).unwrap();
        let next = *out.data().last().unwrap();
        z.push(next);
        manual.push(state.mu * next.exp());
    }
    assert_eq!(m.forecast(&w).unwrap(), manual);
}

#[test]
fn first_teacher_forced_step_equals_first_forecast() {
    let m = active_model(SkipMode::SkipGate, PosEncoding::Rotary, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = positive_window(&mut rng, 16);
    let tf = m.teacher_forced_predictions(&[s.clone()]).unwrap();
    let ar = m.forecast(&s[..12]).unwrap();
    assert!((tf[0][0] - ar[0]).abs() < 1e-12 * ar[0].abs());
}

#[test]
fn teacher_forcing_matches_autoregression_on_its_own_outputs() {
    // feeding the model's forecasts back as "targets" makes teacher forcing
    // reproduce the autoregressive path exactly
    let m = active_model(SkipMode::SkipGate, PosEncoding::Rotary, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let w = positive_window(&mut rng, 12);
    let ar = m.forecast(&w).unwrap();
    let mut s = w.clone();
    s.extend(&ar);
    let tf = m.teacher_forced_predictions(&[s]).unwrap();
    for (a, b) in tf[0].iter().zip(&ar) {
        assert!((a - b).abs() < 1e-10 * b.abs());
    }
}

#[test]
fn forecasts_scale_with_the_input() {
    let m = active_model(SkipMode::SkipGate, PosEncoding::Rotary, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let w = positive_window(&mut rng, 12);
    let base = m.forecast(&w).unwrap();
    for c in [0.001, 3.0, 1e4] {
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        for (a, b) in m.forecast(&scaled).unwrap().iter().zip(&base) {
            assert!((a - c * b).abs() < 1e-9 * (c * b).abs());
        }
    }
}

#[test]
fn targets_do_not_leak_into_predictions() {
    let m = active_model(SkipMode::SkipGate, PosEncoding::Rotary, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s = positive_window(&mut rng, 16);
    let mut changed = s.clone();
    changed[15] *= 50.0; // the last target is never fed
    let a = m.teacher_forced_predictions(&[s.clone()]).unwrap();
    let b = m.teacher_forced_predictions(&[changed]).unwrap();
    assert_eq!(a, b);
    // changing an earlier target only moves later predictions
    let mut earlier = s;
    earlier[13] *= 2.0;
    let c = m.teacher_forced_predictions(&[earlier]).unwrap();
    assert_eq!(a[0][..2], c[0][..2]);
    assert_ne!(a[0][2..], c[0][2..]);
}

#[test]
fn parameter_count_closed_form() {
    for (d, ff) in [(512usize, 2048usize), (32, 128)] {
        let per_layer = 4 * d * d + 2 * d * ff + ff + d + 1;
        let expected = 4 * per_layer + 2 * d + 1;
        let mut t = TransformerConfig::with_width(d);
        t.d_ff = ff;
        let cfg = PIConfig {
            horizon: 18,
            window_multiple: 3,
            skip_mode: SkipMode::SkipGate,
            transformer: t,
        };
        assert_eq!(cfg.parameter_count(), expected);
        if d == 32 {
            let m = PIModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            assert_eq!(m.parameters().iter().map(|(_, p)| p.numel()).sum::<usize>(), expected);
        }
    }
    assert_eq!(
        PIConfig {
            horizon: 18,
            window_multiple: 3,
            skip_mode: SkipMode::SkipGate,
            transformer: TransformerConfig::with_width(512),
        }
        .parameter_count(),
        12_594_181
    );
}

#[test]
fn full_model_loss_gradients_match_finite_differences() {
    let m = active_model(SkipMode::SkipGate, PosEncoding::Rotary, 18);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let windows: Vec<Vec<f64>> = (0..2).map(|_| positive_window(&mut rng, 16)).collect();
    let params: Vec<Tensor> = m.parameters().iter().map(|(_, p)| (*p).clone()).collect();
    let template = m.clone();
    let report = check_gradients(
        |ps| {
            let mut model = template.clone();
            for (slot, p) in model.parameters_mut().into_iter().zip(ps) {
                *slot = p.clone();
            }
            let batch = pitf::data::WindowBatch {
                input_len: 12,
                horizon: 4,
                windows: windows.concat(),
                mask: vec![true; 32],
                mu: windows.iter().map(|w| pitf::model::NormalizationState::from_inputs(&w[..12], 4).mu).collect(),
                series: vec![0, 1],
                starts: vec![0, 0],
            };
            let pred = model.teacher_forced(&batch).map_err(|e| match e {
                pitf::Error::Tensor(t) => t,
                other => panic!("{other}"),
            })?;
            let (loss, _) = pitf::train::mase_loss(&pred, &batch, 1).unwrap();
            Ok(loss)
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(report.max_relative_error() < 1e-4, "{:?}", report.relative_errors);
}
