//! Saving a model and restoring it bit for bit.

use pitf::checkpoint::{self, CheckpointMeta};
use pitf::data::Frequency;
use pitf::run::{init_model, ModelSettings};
use pitf::transformer::Connector;

pub fn run() -> pitf::Result<()> {
    let dir = std::env::temp_dir().join(format!("pitf-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| pitf::Error::io(&dir, e))?;
    let path = dir.join("model.ckpt");

    let settings = ModelSettings {
        connector: Connector::PostLn,
        ..ModelSettings::default()
    };
    let model = init_model(settings.pi_config(Frequency::Daily), 7)?;
    let meta = CheckpointMeta {
        epoch: 3,
        validation_loss: Some(0.8125),
        seed: 7,
    };
    checkpoint::save(&path, &model, &meta)?;
    let bytes = std::fs::metadata(&path).map_err(|e| pitf::Error::io(&path, e))?.len();
    let (restored, restored_meta) = checkpoint::load(&path)?;
    println!("wrote {} ({bytes} bytes), epoch {}", path.display(), restored_meta.epoch);

    let identical = model
        .parameters()
        .iter()
        .zip(restored.parameters())
        .all(|((a, x), (b, y))| a == &b && x.data() == y.data());
    println!("parameters identical after reload: {identical}");
    let window: Vec<f64> = (0..42).map(|t| 50.0 + t as f64).collect();
    println!("forecasts agree: {}", model.forecast(&window)? == restored.forecast(&window)?);
    std::fs::remove_dir_all(&dir).map_err(|e| pitf::Error::io(&dir, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
