//! Splitting series into training and validation windows and sampling a
//! teacher-forcing batch.

use pitf::data::{build_split, sample_batch, Frequency};
use pitf::synthetic::synthetic_dataset;
use pitf::train::sampler_rng;

pub fn run() -> pitf::Result<()> {
    let freq = Frequency::Monthly;
    let meta = freq.meta();
    let records = synthetic_dataset(freq, 50, 1);
    let plan = build_split(&records, meta.horizon, meta.window_multiple)?;
    println!(
        "{freq}: H = {}, input {} values, window {} values",
        meta.horizon,
        plan.input_len,
        plan.window_len()
    );
    println!("25th percentile length {:.1}", plan.percentile_25);
    println!(
        "{} training windows, {} series with a validation window",
        plan.train_window_count(),
        plan.validation_count()
    );
    let padded = plan.series.iter().filter(|s| s.pad > 0).count();
    println!("{padded} series shorter than one window are left-padded");

    let batch = sample_batch(&plan, &records, 8, &mut sampler_rng(0));
    for i in 0..batch.len() {
        println!(
            "  {} from {:>3}, mu {:>10.2}, targets {:.1?}",
            records[batch.series[i]].id,
            batch.starts[i],
            batch.mu[i],
            &batch.window(i)[plan.input_len..]
        );
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
