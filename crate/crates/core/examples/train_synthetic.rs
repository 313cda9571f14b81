//! Training on generated monthly series and comparing against Naïve2.
//!
//! `cargo run --release --example train_synthetic`

use pitf::data::Frequency;
use pitf::metrics::{Baseline, EvalReport, ForecastSet};
use pitf::run::{forecast_records, train_one, ModelSettings};
use pitf::synthetic::synthetic_dataset;
use pitf::train::TrainConfig;

pub fn run_with(epochs: usize, series: usize) -> pitf::Result<()> {
    let freq = Frequency::Monthly;
    let records = synthetic_dataset(freq, series, 11);
    let settings = ModelSettings {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        ..ModelSettings::default()
    };
    let schedule = TrainConfig {
        batch_size: 64,
        batches_per_epoch: 16,
        max_epochs: epochs,
        micro_batch: 64,
        ..TrainConfig::desk()
    };
    let outcome = train_one(&records, freq, &settings, &schedule, 0, |r, t| {
        println!(
            "epoch {:>2}  train {:.4}  val {:.4}  gate {:+.4}  {:.1}s",
            r.epoch,
            r.train_loss_mean,
            r.validation_loss.unwrap_or(f64::NAN),
            r.gate.unwrap_or(0.0),
            t.wall_seconds
        );
    })?;
    println!("best epoch {} (validation loss {:.4})", outcome.best_epoch, outcome.best_loss);

    let model = EvalReport::evaluate(&records, &forecast_records(&outcome.model, &records, 64)?)?;
    let naive2 = EvalReport::evaluate(&records, &ForecastSet::baseline(&records, Baseline::Naive2))?;
    println!("model  sMAPE {:.3}  MASE {:.3}  OWA {:.3}", model.total.smape, model.total.mase, model.total.owa);
    println!("naive2 sMAPE {:.3}  MASE {:.3}  OWA {:.3}", naive2.total.smape, naive2.total.mase, naive2.total.owa);
    Ok(())
}

pub fn run() -> pitf::Result<()> {
    run_with(2, 30)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_with(12, 300) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
