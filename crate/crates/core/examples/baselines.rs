//! Scoring the classical baselines with sMAPE, MASE, OWA and R0.5.
//! Naïve2 is the reference, so its OWA is exactly 1.

use pitf::data::Frequency;
use pitf::metrics::{Baseline, EvalReport, ForecastSet};
use pitf::synthetic::synthetic_dataset;

pub fn run() -> pitf::Result<()> {
    for freq in [Frequency::Quarterly, Frequency::Hourly] {
        let records = synthetic_dataset(freq, 40, 5);
        for method in [Baseline::Naive2, Baseline::SeasonalNaive, Baseline::Naive] {
            let report = EvalReport::evaluate(&records, &ForecastSet::baseline(&records, method))?;
            let t = &report.total;
            println!(
                "{freq:<10} {method:<8?} sMAPE {:>7.3}  MASE {:>6.3}  OWA {:.3}  R0.5 {:.4}",
                t.smape, t.mase, t.owa, t.r05
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
