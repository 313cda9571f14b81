//! Backpropagated gradients of the full training loss against central
//! finite differences.

use pitf::data::{build_split, sample_batch, Frequency, SeriesRecord};
use pitf::model::{PIConfig, PIModel, SkipMode};
use pitf::train::{mase_loss, sampler_rng};
use pitf::transformer::{Connector, PosEncoding, TransformerConfig};
use pitf_tensor::gradcheck::check_gradients;
use pitf_tensor::{Tensor, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> pitf::Result<()> {
    let records: Vec<SeriesRecord> = (0..3)
        .map(|k| {
            let train = (0..40).map(|t| 8.0 + 2.0 * ((t + 3 * k) as f64 * 0.7).sin()).collect();
            SeriesRecord::new(format!("S{k}"), Frequency::Quarterly, train, vec![])
        })
        .collect::<pitf::Result<_>>()?;
    let plan = build_split(&records, 4, 3)?;
    let batch = sample_batch(&plan, &records, 2, &mut sampler_rng(0));

    let config = PIConfig {
        horizon: 4,
        window_multiple: 3,
        skip_mode: SkipMode::SkipGate,
        transformer: TransformerConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_ff: 32,
            connector: Connector::PreLn,
            pos_encoding: PosEncoding::Rotary,
        },
    };
    let mut template = PIModel::new(config, &mut ChaCha8Rng::seed_from_u64(3))?;
    // move the gate off zero so the transformer's gradients are non-trivial
    template.alpha = Some(Tensor::parameter(&[1], vec![0.5])?);
    let names: Vec<String> = template.parameters().into_iter().map(|(n, _)| n).collect();
    let params: Vec<Tensor> = template.parameters().into_iter().map(|(_, p)| p.clone()).collect();

    let report = check_gradients(
        |ps| {
            let mut model = template.clone();
            for (slot, p) in model.parameters_mut().into_iter().zip(ps) {
                *slot = p.clone();
            }
            let pred = model.teacher_forced(&batch).map_err(as_tensor_error)?;
            Ok(mase_loss(&pred, &batch, 1).map_err(as_tensor_error)?.0)
        },
        &params,
        1e-5,
    )?;
    for (name, err) in names.iter().zip(&report.relative_errors) {
        println!("{name:<36} {err:.2e}");
    }
    println!(
        "max relative error {:.2e} over {} coordinates ({} at kinks skipped)",
        report.max_relative_error(),
        report.coordinate_count(),
        report.nonsmooth_count()
    );
    Ok(())
}

fn as_tensor_error(e: pitf::Error) -> TensorError {
    match e {
        pitf::Error::Tensor(t) => t,
        other => panic!("{other}"),
    }
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
