//! Desk-scale run on the competition's Hourly series: three seeds of a
//! 4-layer, width-32 model, scored against Naïve2.
//!
//! `M4_DATA_ROOT=/path/to/m4 cargo run --release --example m4_hourly`
//!
//! Expect a few hours on one CPU core.

use std::path::PathBuf;

use pitf::data::Frequency;
use pitf::metrics::{median, Baseline, EvalReport, ForecastSet};
use pitf::run::{load_data, run_parallel, score_arm_seed, ModelSettings};
use pitf::train::TrainConfig;

fn main() {
    let Some(root) = std::env::var_os("M4_DATA_ROOT").map(PathBuf::from) else {
        eprintln!("set M4_DATA_ROOT to a directory holding Hourly-train.csv and Hourly-test.csv");
        std::process::exit(2);
    };
    if let Err(e) = run(&root) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(root: &std::path::Path) -> pitf::Result<()> {
    let freq = Frequency::Hourly;
    let records = load_data(root, freq, true)?;
    let naive2 = EvalReport::evaluate(&records, &ForecastSet::baseline(&records, Baseline::Naive2))?;
    println!("{} series; Naive2 sMAPE {:.3} MASE {:.3}", records.len(), naive2.total.smape, naive2.total.mase);

    let settings = ModelSettings {
        d_model: 32,
        d_ff: Some(128),
        ..ModelSettings::default()
    };
    let schedule = TrainConfig::desk();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let scores = run_parallel(vec![0u64, 1, 2], workers, |seed| {
        score_arm_seed(&records, freq, &settings, &schedule, seed).map(|(s, _)| s)
    })
    .into_iter()
    .collect::<pitf::Result<Vec<_>>>()?;
    for s in &scores {
        println!("seed {}: OWA {:.3} R0.5 {:.4} (best epoch {})", s.seed, s.owa, s.r05, s.best_epoch);
    }
    let owa: Vec<f64> = scores.iter().map(|s| s.owa).collect();
    let r05: Vec<f64> = scores.iter().map(|s| s.r05).collect();
    println!("median OWA {:.3}, median R0.5 {:.4}", median(&owa), median(&r05));
    Ok(())
}
