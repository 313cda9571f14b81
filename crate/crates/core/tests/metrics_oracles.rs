//! Metrics against independent flat-loop oracles and reference values.

use pitf::data::{Frequency, SeriesRecord};
use pitf::metrics::{
    ensemble_mean, is_seasonal, mase, naive2, owa, r05, score_frequency, smape, EvalReport, ForecastSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smape_oracle(f: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..y.len() {
        let d = y[i].abs() + f[i].abs();
        if d > 0.0 {
            total += 2.0 * (y[i] - f[i]).abs() / d;
        }
    }
    100.0 * total / y.len() as f64
}

fn mase_oracle(f: &[f64], y: &[f64], x: &[f64], s: usize) -> f64 {
    let mut scale = 0.0;
    for j in s..x.len() {
        scale += (x[j] - x[j - s]).abs();
    }
    scale /= (x.len() - s) as f64;
    let mut err = 0.0;
    for i in 0..y.len() {
        err += (y[i] - f[i]).abs();
    }
    err / y.len() as f64 / scale
}

fn r05_oracle(pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let (mut a, mut b) = (0.0, 0.0);
    for (f, y) in pairs {
        for i in 0..y.len() {
            a += (y[i] - f[i]).abs();
            b += y[i].abs();
        }
    }
    a / b
}

fn positive(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let level = 10f64.powf(rng.gen_range(0.0..4.0));
    (0..n).map(|_| level * rng.gen_range(0.5..1.5)).collect()
}

/// Deterministic fixture shared with the reference computation below.
fn fixture_series(k: usize, n: usize, s: usize) -> Vec<f64> {
    (0..n)
        .map(|t| {
            let angle = 2.0 * std::f64::consts::PI * t as f64 / s as f64 + k as f64;
            50.0 + 10.0 * k as f64 + 8.0 * angle.sin() + ((t * 37 + k * 11) % 13) as f64 * 0.7 + 0.05 * t as f64
        })
        .collect()
}

// Naïve2 forecasts of `fixture_series(k, n, s)` with horizon `h`, computed
// with statsmodels' classical multiplicative `seasonal_decompose`.
const STATSMODELS_NAIVE2: &[(usize, usize, usize, usize, &[f64])] = &[
    (0, 40, 4, 8, &[51.08787990524354, 58.23932413808699, 50.734886019936624, 43.95, 51.08787990524354, 58.23932413808699, 50.734886019936624, 43.95]),
    (1, 75, 12, 18, &[72.59937451962033, 68.9755647314903, 65.16316873988191, 61.3001584881232, 60.159359724475394, 61.21201038923466, 64.74295901195666, 69.26024747920705, 71.9546392818692, 73.62265247396162, 75.43227990048818, 75.00920812007256, 72.59937451962033, 68.9755647314903, 65.16316873988191, 61.3001584881232, 60.159359724475394, 61.21201038923466]),
    (2, 31, 5, 6, &[70.26748335538133, 64.02272016043223, 68.02541087929423, 75.62322348032191, 79.47437941460547, 70.26748335538133]),
    (3, 200, 24, 48, &[92.3442153101819, 91.92078112691463, 94.86545999850443, 95.30143136316286, 99.13534222803351, 101.22937162017823, 103.15175181122517, 104.89385619641537, 106.22846728984065, 108.49617028445984, 108.79887458969039, 109.83266120255378, 107.41145762246265, 107.57283499445967, 104.34303625445781, 103.63118845729271, 101.34209479005835, 98.85762716975356, 96.50778707296601, 94.31076114508286, 92.53975001586544, 91.20297897562656, 92.00122976160473, 90.40772907176257, 92.3442153101819, 91.92078112691463, 94.86545999850443, 95.30143136316286, 99.13534222803351, 101.22937162017823, 103.15175181122517, 104.89385619641537, 106.22846728984065, 108.49617028445984, 108.79887458969039, 109.83266120255378, 107.41145762246265, 107.57283499445967, 104.34303625445781, 103.63118845729271, 101.34209479005835, 98.85762716975356, 96.50778707296601, 94.31076114508286, 92.53975001586544, 91.20297897562656, 92.00122976160473, 90.40772907176257]),
];

#[test]
fn naive2_matches_reference_decomposition() {
    for &(k, n, s, h, expected) in STATSMODELS_NAIVE2 {
        let x = fixture_series(k, n, s);
        assert!(is_seasonal(&x, s));
        let got = naive2(&x, s, h);
        assert_eq!(got.len(), expected.len());
        for (a, b) in got.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10 * b.abs(), "k={k}: {a} vs {b}");
        }
    }
}

#[test]
fn naive2_on_white_noise_is_persistence() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut falls_back = 0;
    for _ in 0..50 {
        let x = positive(&mut rng, 96);
        if naive2(&x, 12, 18) == vec![x[95]; 18] {
            falls_back += 1;
        }
    }
    // a 90% one-sided test flags roughly one noise series in ten
    assert!(falls_back >= 40, "{falls_back}");
}

#[test]
fn randomized_fixtures_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (h, s) = (rng.gen_range(1..20), rng.gen_range(1..13));
        let n = rng.gen_range(s + 1..200);
        let x = positive(&mut rng, n);
        let y = positive(&mut rng, h);
        let f = positive(&mut rng, h);
        assert!((smape(&f, &y) - smape_oracle(&f, &y)).abs() < 1e-10);
        assert!((mase(&f, &y, &x, s).unwrap() - mase_oracle(&f, &y, &x, s)).abs() < 1e-10);
        let (a, b, c, d) = (rng.gen_range(1.0..30.0), rng.gen_range(0.2..3.0), rng.gen_range(1.0..30.0), rng.gen_range(0.2..3.0));
        assert!((owa(a, b, c, d).unwrap() - (a / c + b / d) / 2.0).abs() < 1e-10);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..5).map(|_| (positive(&mut rng, h), positive(&mut rng, h))).collect();
        let got = r05(pairs.iter().map(|(f, y)| (f.as_slice(), y.as_slice()))).unwrap();
        assert!((got - r05_oracle(&pairs)).abs() < 1e-10);
    }
}

fn records(freq: Frequency, count: usize, seed: u64) -> Vec<SeriesRecord> {
    pitf::synthetic::synthetic_dataset(freq, count, seed)
}

#[test]
fn naive2_scores_owa_one_everywhere() {
    let mut recs = records(Frequency::Monthly, 20, 1);
    recs.extend(records(Frequency::Hourly, 5, 2));
    let set = ForecastSet::baseline(&recs, pitf::metrics::Baseline::Naive2);
    let report = EvalReport::evaluate(&recs, &set).unwrap();
    for r in &report.rows {
        assert_eq!(r.owa, 1.0);
    }
    assert_eq!(report.total.owa, 1.0);
    assert_eq!(report.total.owa_count_weighted, 1.0);
}

#[test]
fn totals_are_count_weighted() {
    let mut recs = records(Frequency::Yearly, 30, 4);
    recs.extend(records(Frequency::Quarterly, 7, 5));
    recs.extend(records(Frequency::Daily, 3, 6));
    let set = ForecastSet::baseline(&recs, pitf::metrics::Baseline::SeasonalNaive);
    let report = EvalReport::evaluate(&recs, &set).unwrap();
    let n: f64 = report.rows.iter().map(|r| r.series as f64).sum();
    let w = |f: fn(&pitf::metrics::FrequencyScores) -> f64| report.rows.iter().map(|r| r.series as f64 * f(r)).sum::<f64>() / n;
    assert!((report.total.smape - w(|r| r.smape)).abs() < 1e-12);
    assert!((report.total.mase - w(|r| r.mase)).abs() < 1e-12);
    assert!((report.total.owa_count_weighted - w(|r| r.owa)).abs() < 1e-12);
    // the pooled R0.5 over every point
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = recs.iter().map(|r| (set.get(&r.id).unwrap().to_vec(), r.test.clone())).collect();
    assert!((report.total.r05 - r05_oracle(&pairs)).abs() < 1e-12);
}

#[test]
fn missing_forecasts_are_reported() {
    let recs = records(Frequency::Yearly, 4, 7);
    let mut set = ForecastSet::baseline(&recs, pitf::metrics::Baseline::Naive);
    set.forecasts.remove(&recs[2].id);
    match score_frequency(&recs, &set) {
        Err(pitf::Error::Coverage(ids)) => assert_eq!(ids, vec![recs[2].id.clone()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn ensemble_is_no_worse_than_its_worst_member() {
    let recs = records(Frequency::Quarterly, 40, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let members: Vec<ForecastSet> = (0..3)
        .map(|_| {
            let mut s = ForecastSet::new(None);
            for r in &recs {
                let noisy = r.test.iter().map(|y| y * rng.gen_range(0.7..1.3)).collect();
                s.insert(r.id.clone(), noisy);
            }
            s
        })
        .collect();
    let owa_of = |s: &ForecastSet| EvalReport::evaluate(&recs, s).unwrap().total.owa;
    let worst = members.iter().map(owa_of).fold(0.0, f64::max);
    assert!(owa_of(&ensemble_mean(&members).unwrap()) <= worst);
}

#[test]
fn forecast_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let mut set = ForecastSet::new(None);
    set.insert("H1", vec![1.0 / 3.0, 2.5]);
    set.insert("Y1", vec![7.0]);
    set.write_csv(&path).unwrap();
    let back = ForecastSet::read_csv(&path).unwrap();
    assert_eq!(back.forecasts, set.forecasts);
}

proptest! {
    #[test]
    fn metrics_are_scale_invariant(seed in 0u64..500, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = positive(&mut rng, 40);
        let y = positive(&mut rng, 6);
        let f = positive(&mut rng, 6);
        let sc = |v: &[f64]| v.iter().map(|a| a * c).collect::<Vec<_>>();
        prop_assert!((smape(&f, &y) - smape(&sc(&f), &sc(&y))).abs() < 1e-10);
        let m1 = mase(&f, &y, &x, 4).unwrap();
        let m2 = mase(&sc(&f), &sc(&y), &sc(&x), 4).unwrap();
        prop_assert!((m1 - m2).abs() < 1e-10 * m1.max(1.0));
        let r1 = r05([(f.as_slice(), y.as_slice())]).unwrap();
        let (fs, ys) = (sc(&f), sc(&y));
        let r2 = r05([(fs.as_slice(), ys.as_slice())]).unwrap();
        prop_assert!((r1 - r2).abs() < 1e-12);
        let n1 = naive2(&x, 4, 6);
        let n2 = naive2(&sc(&x), 4, 6);
        for (a, b) in n1.iter().zip(&n2) {
            prop_assert!((a * c - b).abs() < 1e-9 * b.abs());
        }
    }

    #[test]
    fn identical_forecasts_score_zero(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = positive(&mut rng, 8);
        let x = positive(&mut rng, 30);
        prop_assert_eq!(smape(&y, &y), 0.0);
        prop_assert_eq!(mase(&y, &y, &x, 1).unwrap(), 0.0);
        prop_assert_eq!(r05([(y.as_slice(), y.as_slice())]).unwrap(), 0.0);
    }
}
