//! Skip/gate ablation on generated data through the same code path as
//! `pitf ablate`.

use pitf::data::Frequency;
use pitf::model::SkipMode;
use pitf::run::{ablation_table, cmd_ablate, AblationConfig, ModelSettings, Profile, RunConfig, Study};
use pitf::synthetic::{synthetic_dataset, write_dataset};
use pitf::transformer::{Connector, PosEncoding};

pub fn run_with(epochs: usize, seeds: usize) -> pitf::Result<()> {
    let root = std::env::temp_dir().join(format!("pitf-ablation-{}", std::process::id()));
    let data = root.join("data");
    write_dataset(&data, &synthetic_dataset(Frequency::Quarterly, 60, 2))?;

    let mut base = RunConfig::new(Frequency::Quarterly, data, Profile::Desk);
    base.model = ModelSettings {
        n_layers: 2,
        n_heads: 2,
        ..ModelSettings::default()
    };
    base.train.batch_size = 32;
    base.train.batches_per_epoch = 8;
    base.train.max_epochs = epochs;
    base.seeds = (0..seeds as u64).collect();
    base.out_dir = root.join("sweep");
    let config = AblationConfig {
        base,
        study: Study::Skip,
        d_models: vec![16],
        skip_modes: vec![SkipMode::None, SkipMode::SkipOnly, SkipMode::SkipGate],
        connectors: vec![Connector::Rezero],
        pos_encodings: vec![PosEncoding::Rotary],
    };
    let results = cmd_ablate(&config, |line| println!("{line}"))?;
    print!("{}", ablation_table(&results));
    std::fs::remove_dir_all(&root).map_err(|e| pitf::Error::io(&root, e))?;
    Ok(())
}

pub fn run() -> pitf::Result<()> {
    run_with(1, 1)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_with(8, 3) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
