//! A freshly initialized gated model forecasts exactly like persistence:
//! every future value equals the last observation.

use pitf::model::{PIConfig, PIModel, SkipMode};
use pitf::transformer::TransformerConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> pitf::Result<()> {
    let config = PIConfig {
        horizon: 6,
        window_multiple: 3,
        skip_mode: SkipMode::SkipGate,
        transformer: TransformerConfig::with_width(32),
    };
    println!("parameters: {}", config.parameter_count());
    let model = PIModel::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;

    let window: Vec<f64> = (0..18).map(|t| 120.0 + 15.0 * (t as f64 * 0.8).sin()).collect();
    let forecast = model.forecast(&window)?;
    let last = window[window.len() - 1];
    println!("last observation {last:.4}");
    println!("forecast         {forecast:.4?}");
    assert!(forecast.iter().all(|v| ((v - last) / last).abs() < 1e-9));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
