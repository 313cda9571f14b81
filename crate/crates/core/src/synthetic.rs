//! Synthetic series in the M4 layout, for tests, examples and smoke runs
//! when the competition files are not at hand.
//!
//! Each series is `level * exp(trend * t + seasonal(t) + noise_t)` with
//! AR(1) noise, so every value is strictly positive.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{write_m4_csv, Frequency, SeriesRecord};
use crate::error::{Error, Result};

/// Training length drawn to resemble the frequency's published spread.
fn draw_length(freq: Frequency, rng: &mut impl Rng) -> usize {
    let meta = freq.meta();
    if freq == Frequency::Hourly {
        return if rng.gen_bool(0.6) { 748 } else { 1008 };
    }
    let upper = (3 * meta.percentile_25_length).max(meta.min_length + 3 * meta.horizon);
    rng.gen_range(meta.min_length..=upper)
}

/// One positive series of `len` values (train and test together).
pub fn generate_series(len: usize, seasonality: usize, rng: &mut impl Rng) -> Vec<f64> {
    let level = 10f64.powf(rng.gen_range(1.5..4.0));
    let trend = rng.gen_range(-1e-3..2e-3);
    let amplitude = if seasonality > 1 { rng.gen_range(0.05..0.4) } else { 0.0 };
    let phase = rng.gen_range(0.0..TAU);
    let sigma = rng.gen_range(0.01..0.06);
    let phi = rng.gen_range(0.0..0.8);
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let mut ar = 0.0;
    (0..len)
        .map(|t| {
            ar = phi * ar + noise.sample(rng);
            let season = if seasonality > 1 {
                let angle = TAU * t as f64 / seasonality as f64 + phase;
                amplitude * (angle.sin() + 0.3 * (2.0 * angle).cos())
            } else {
                0.0
            };
            level * (trend * t as f64 + season + ar).exp()
        })
        .collect()
}

/// `count` series of one frequency with ids like the competition's (`H1`,
/// `H2`, ...), each with H held-out test values.
pub fn synthetic_dataset(freq: Frequency, count: usize, seed: u64) -> Vec<SeriesRecord> {
    let meta = freq.meta();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prefix = &meta.name[..1];
    (1..=count)
        .map(|i| {
            let len = draw_length(freq, &mut rng);
            let mut values = generate_series(len + meta.horizon, meta.seasonality, &mut rng);
            let test = values.split_off(len);
            SeriesRecord::new(format!("{prefix}{i}"), freq, values, test).expect("generated values are positive")
        })
        .collect()
}

/// Writes `<Freq>-train.csv` and `<Freq>-test.csv` under `root`.
pub fn write_dataset(root: &Path, records: &[SeriesRecord]) -> Result<()> {
    let freq = records
        .first()
        .ok_or_else(|| Error::Data("nothing to write".into()))?
        .frequency;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let rows = |f: fn(&SeriesRecord) -> &Vec<f64>| -> Vec<(String, Vec<f64>)> {
        records.iter().map(|r| (r.id.clone(), f(r).clone())).collect()
    };
    write_m4_csv(&root.join(freq.train_file()), &rows(|r| &r.train))?;
    write_m4_csv(&root.join(freq.test_file()), &rows(|r| &r.test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_frequency;

    #[test]
    fn written_dataset_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let recs = synthetic_dataset(Frequency::Quarterly, 5, 3);
        write_dataset(dir.path(), &recs).unwrap();
        let back = load_frequency(dir.path(), Frequency::Quarterly).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn lengths_respect_the_minimum() {
        for f in Frequency::ALL {
            for r in synthetic_dataset(f, 20, 1) {
                assert!(r.train.len() >= f.meta().min_length);
                assert_eq!(r.test.len(), f.meta().horizon);
            }
        }
    }
}
