//! M4 ingestion, per-frequency constants, train/validation windowing and
//! mini-batch sampling.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NormalizationState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Yearly,
    Quarterly,
    Monthly,
    Weekly,
    Daily,
    Hourly,
}

/// Constants of one M4 frequency, including the published dataset statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrequencyMeta {
    pub name: &'static str,
    pub horizon: usize,
    pub seasonality: usize,
    pub window_multiple: usize,
    pub series_count: usize,
    pub min_length: usize,
    pub percentile_25_length: usize,
}

impl FrequencyMeta {
    pub fn input_len(&self) -> usize {
        self.window_multiple * self.horizon
    }
}

impl Frequency {
    pub const ALL: [Frequency; 6] = [
        Frequency::Yearly,
        Frequency::Quarterly,
        Frequency::Monthly,
        Frequency::Weekly,
        Frequency::Daily,
        Frequency::Hourly,
    ];

    pub fn meta(self) -> FrequencyMeta {
        let (name, horizon, seasonality, window_multiple, series_count, min_length, p25) = match self {
            Frequency::Yearly => ("Yearly", 6, 1, 3, 23_000, 19, 26),
            Frequency::Quarterly => ("Quarterly", 8, 4, 3, 24_000, 24, 70),
            Frequency::Monthly => ("Monthly", 18, 12, 3, 48_000, 60, 100),
            Frequency::Weekly => ("Weekly", 13, 1, 4, 359, 93, 392),
            Frequency::Daily => ("Daily", 14, 1, 3, 4_227, 107, 337),
            Frequency::Hourly => ("Hourly", 48, 24, 4, 414, 748, 748),
        };
        FrequencyMeta {
            name,
            horizon,
            seasonality,
            window_multiple,
            series_count,
            min_length,
            percentile_25_length: p25,
        }
    }

    /// File names used by the M4 repository, e.g. `Hourly-train.csv`.
    pub fn train_file(self) -> String {
        format!("{}-train.csv", self.meta().name)
    }

    pub fn test_file(self) -> String {
        format!("{}-test.csv", self.meta().name)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.meta().name.to_lowercase())
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Frequency::ALL
            .into_iter()
            .find(|f| f.meta().name.eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown frequency '{s}'")))
    }
}

/// One univariate M4 series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub id: String,
    pub frequency: Frequency,
    pub train: Vec<f64>,
    /// Held-out continuation of length H; empty when no test file was given.
    pub test: Vec<f64>,
}

impl SeriesRecord {
    pub fn new(id: impl Into<String>, frequency: Frequency, train: Vec<f64>, test: Vec<f64>) -> Result<Self> {
        let id = id.into();
        for v in train.iter().chain(&test) {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Series {
                    id,
                    msg: format!("non-positive or non-finite value {v}"),
                });
            }
        }
        Ok(SeriesRecord {
            id,
            frequency,
            train,
            test,
        })
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan")
}

/// Parses an M4-style CSV: optional header, then `id,v1,v2,...` with
/// variable row length. Trailing empty (or `NA`) fields are ignored.
pub(crate) fn read_rows(path: &Path) -> Result<Vec<(u64, String, Vec<f64>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 1;
        let record = record.map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        if record.iter().all(is_missing) {
            continue;
        }
        let id = record.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                msg: "missing series id".into(),
            });
        }
        let mut fields: Vec<&str> = record.iter().skip(1).collect();
        while fields.last().is_some_and(|f| is_missing(f)) {
            fields.pop();
        }
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => rows.push((line, id, values)),
            // a header row has non-numeric fields; only the first line may be one
            Err(_) if line == 1 => continue,
            Err(_) => {
                let bad = fields.iter().find(|f| f.parse::<f64>().is_err()).unwrap();
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("invalid value '{bad}'"),
                });
            }
        }
    }
    Ok(rows)
}

/// Loads a `<Freq>-train.csv` file and, optionally, the matching test file.
///
/// Every train row must have a test row with exactly H values when a test
/// file is supplied. Values must be strictly positive.
pub fn load_m4_csv(train_path: &Path, test_path: Option<&Path>, frequency: Frequency) -> Result<Vec<SeriesRecord>> {
    let horizon = frequency.meta().horizon;
    let train_rows = read_rows(train_path)?;
    let mut tests: HashMap<String, (u64, Vec<f64>)> = HashMap::new();
    if let Some(test_path) = test_path {
        for (line, id, values) in read_rows(test_path)? {
            if values.len() != horizon {
                return Err(Error::Malformed {
                    path: test_path.to_path_buf(),
                    line,
                    msg: format!("series {id} has {} test values, expected {horizon}", values.len()),
                });
            }
            tests.insert(id, (line, values));
        }
    }
    let mut records = Vec::with_capacity(train_rows.len());
    for (line, id, values) in train_rows {
        if values.is_empty() {
            return Err(Error::Malformed {
                path: train_path.to_path_buf(),
                line,
                msg: format!("series {id} has no values"),
            });
        }
        let test = match test_path {
            Some(_) => tests
                .remove(&id)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::Series {
                    id: id.clone(),
                    msg: "missing from test file".into(),
                })?,
            None => Vec::new(),
        };
        records.push(SeriesRecord::new(id, frequency, values, test)?);
    }
    if let Some((id, (line, _))) = tests.into_iter().min_by_key(|(_, (l, _))| *l) {
        return Err(Error::Malformed {
            path: test_path.unwrap().to_path_buf(),
            line,
            msg: format!("series {id} has no training row"),
        });
    }
    Ok(records)
}

/// Loads `<root>/<Freq>-train.csv` and `<root>/<Freq>-test.csv`.
pub fn load_frequency(root: &Path, frequency: Frequency) -> Result<Vec<SeriesRecord>> {
    let train = root.join(frequency.train_file());
    let test = root.join(frequency.test_file());
    load_m4_csv(&train, Some(&test), frequency)
}

/// Writes rows in the M4 layout: a `"V1","V2",...` header and every field
/// quoted.
pub fn write_m4_csv(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .quote_style(csv::QuoteStyle::Always)
        .from_writer(file);
    let width = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0) + 1;
    let to_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    w.write_record((1..=width).map(|i| format!("V{i}"))).map_err(to_err)?;
    for (id, values) in rows {
        let mut fields = vec![id.clone()];
        fields.extend(values.iter().map(|v| v.to_string()));
        fields.resize(width, String::new());
        w.write_record(&fields).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Empirical percentile with linear interpolation between order statistics.
pub fn percentile(values: &[usize], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac
}

/// Window bookkeeping for a single series, in padded coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesWindows {
    /// Valid start offsets of training sub-sequences.
    pub train_starts: Range<usize>,
    /// Start of the rightmost sub-sequence, if the series has a validation window.
    pub validation_start: Option<usize>,
    /// Copies of the first observation prepended to reach `nH + H` values.
    pub pad: usize,
}

/// Train/validation split over a set of series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub input_len: usize,
    pub horizon: usize,
    /// Empirical 25th percentile of the training lengths.
    pub percentile_25: f64,
    pub series: Vec<SeriesWindows>,
}

impl SplitPlan {
    pub fn window_len(&self) -> usize {
        self.input_len + self.horizon
    }

    pub fn train_window_count(&self) -> usize {
        self.series.iter().map(|s| s.train_starts.len()).sum()
    }

    pub fn validation_count(&self) -> usize {
        self.series.iter().filter(|s| s.validation_start.is_some()).count()
    }

    /// Raw values and validity mask of the window at `start` of series `index`.
    pub fn window(&self, records: &[SeriesRecord], index: usize, start: usize) -> (Vec<f64>, Vec<bool>) {
        let series = &records[index].train;
        let pad = self.series[index].pad;
        let len = self.window_len();
        let mut values = Vec::with_capacity(len);
        let mut mask = Vec::with_capacity(len);
        for p in start..start + len {
            if p < pad {
                values.push(series[0]);
                mask.push(false);
            } else {
                values.push(series[p - pad]);
                mask.push(true);
            }
        }
        (values, mask)
    }

    /// All validation windows, in series order.
    pub fn validation_batch(&self, records: &[SeriesRecord]) -> WindowBatch {
        let picks = self
            .series
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.validation_start.map(|st| (i, st)))
            .collect::<Vec<_>>();
        WindowBatch::gather(self, records, &picks)
    }
}

/// Builds the split: the validation window is the rightmost `nH + H` values
/// of every series at least as long as the 25th length percentile; training
/// windows are all stride-1 windows whose targets end before the validation
/// targets. Series shorter than `nH + H` are left-padded with their first
/// value and contribute one (masked) training window.
pub fn build_split(records: &[SeriesRecord], horizon: usize, window_multiple: usize) -> Result<SplitPlan> {
    if records.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    if horizon == 0 || window_multiple == 0 {
        return Err(Error::Config("horizon and window multiple must be positive".into()));
    }
    let input_len = horizon * window_multiple;
    let window = input_len + horizon;
    let lengths: Vec<usize> = records.iter().map(SeriesRecord::len).collect();
    let p25 = percentile(&lengths, 25.0);
    let series: Vec<SeriesWindows> = lengths
        .iter()
        .map(|&t| {
            if t < window {
                // targets must be real observations
                let usable = t > horizon;
                SeriesWindows {
                    train_starts: 0..usize::from(usable),
                    validation_start: None,
                    pad: window - t,
                }
            } else if t as f64 >= p25 {
                let last_train = (t - horizon).checked_sub(window).map_or(0, |v| v + 1);
                SeriesWindows {
                    train_starts: 0..last_train,
                    validation_start: Some(t - window),
                    pad: 0,
                }
            } else {
                SeriesWindows {
                    train_starts: 0..t - window + 1,
                    validation_start: None,
                    pad: 0,
                }
            }
        })
        .collect();
    let plan = SplitPlan {
        input_len,
        horizon,
        percentile_25: p25,
        series,
    };
    if plan.train_window_count() == 0 {
        return Err(Error::Config("no usable training windows".into()));
    }
    Ok(plan)
}

/// Fixed-shape batch of raw sub-sequences of length `nH + H`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub input_len: usize,
    pub horizon: usize,
    /// Row-major `[len, nH + H]` raw values.
    pub windows: Vec<f64>,
    /// `false` where a value is left padding.
    pub mask: Vec<bool>,
    /// Per-window normalisation constant from the input portion.
    pub mu: Vec<f64>,
    pub series: Vec<usize>,
    pub starts: Vec<usize>,
}

impl WindowBatch {
    fn gather(plan: &SplitPlan, records: &[SeriesRecord], picks: &[(usize, usize)]) -> Self {
        let mut batch = WindowBatch {
            input_len: plan.input_len,
            horizon: plan.horizon,
            windows: Vec::with_capacity(picks.len() * plan.window_len()),
            mask: Vec::with_capacity(picks.len() * plan.window_len()),
            mu: Vec::with_capacity(picks.len()),
            series: Vec::with_capacity(picks.len()),
            starts: Vec::with_capacity(picks.len()),
        };
        for &(i, start) in picks {
            let (values, mask) = plan.window(records, i, start);
            let state = NormalizationState::from_inputs(&values[..plan.input_len], plan.horizon);
            batch.windows.extend(values);
            batch.mask.extend(mask);
            batch.mu.push(state.mu);
            batch.series.push(i);
            batch.starts.push(start);
        }
        batch
    }

    pub fn window_len(&self) -> usize {
        self.input_len + self.horizon
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f64] {
        let w = self.window_len();
        &self.windows[i * w..(i + 1) * w]
    }

    pub fn window_mask(&self, i: usize) -> &[bool] {
        let w = self.window_len();
        &self.mask[i * w..(i + 1) * w]
    }

    /// Rows `range` as a new batch.
    pub fn rows(&self, range: Range<usize>) -> WindowBatch {
        let w = self.window_len();
        WindowBatch {
            input_len: self.input_len,
            horizon: self.horizon,
            windows: self.windows[range.start * w..range.end * w].to_vec(),
            mask: self.mask[range.start * w..range.end * w].to_vec(),
            mu: self.mu[range.clone()].to_vec(),
            series: self.series[range.clone()].to_vec(),
            starts: self.starts[range].to_vec(),
        }
    }

    /// Row-major `[len, H]` target values.
    pub fn targets(&self) -> Vec<f64> {
        (0..self.len())
            .flat_map(|i| self.window(i)[self.input_len..].iter().copied())
            .collect()
    }
}

/// Draws `batch_size` training windows: a series uniformly among those with
/// training windows, then a start offset uniformly within that series.
pub fn sample_batch(plan: &SplitPlan, records: &[SeriesRecord], batch_size: usize, rng: &mut impl Rng) -> WindowBatch {
    let eligible: Vec<usize> = plan
        .series
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.train_starts.is_empty())
        .map(|(i, _)| i)
        .collect();
    assert!(!eligible.is_empty(), "split plan has no training windows");
    let picks: Vec<(usize, usize)> = (0..batch_size)
        .map(|_| {
            let i = eligible[rng.gen_range(0..eligible.len())];
            let start = rng.gen_range(plan.series[i].train_starts.clone());
            (i, start)
        })
        .collect();
    WindowBatch::gather(plan, records, &picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series(id: &str, len: usize) -> SeriesRecord {
        let train = (0..len).map(|i| 10.0 + (i % 7) as f64).collect();
        SeriesRecord::new(id, Frequency::Hourly, train, vec![]).unwrap()
    }

    #[test]
    fn table_constants() {
        let h: Vec<(usize, usize, usize)> = Frequency::ALL
            .iter()
            .map(|f| {
                let m = f.meta();
                (m.horizon, m.seasonality, m.window_multiple)
            })
            .collect();
        assert_eq!(h, vec![(6, 1, 3), (8, 4, 3), (18, 12, 3), (13, 1, 4), (14, 1, 3), (48, 24, 4)]);
        assert_eq!(Frequency::Hourly.meta().input_len(), 192);
    }

    #[test]
    fn frequency_parsing() {
        assert_eq!("hourly".parse::<Frequency>().unwrap(), Frequency::Hourly);
        assert_eq!("Monthly".parse::<Frequency>().unwrap(), Frequency::Monthly);
        assert!("minutely".parse::<Frequency>().is_err());
        assert_eq!(Frequency::Weekly.train_file(), "Weekly-train.csv");
    }

    #[test]
    fn rejects_non_positive_values() {
        let err = SeriesRecord::new("Y7", Frequency::Yearly, vec![1.0, 0.0], vec![]).unwrap_err();
        assert!(err.to_string().contains("Y7"));
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1, 2, 3, 4, 5], 25.0), 2.0);
        assert_eq!(percentile(&[10, 20], 25.0), 12.5);
        assert_eq!(percentile(&[748, 748, 1008, 1008, 1008], 25.0), 748.0);
    }

    #[test]
    fn exact_length_below_percentile_gives_one_window() {
        // H=2, n=2 -> window 6; lengths 6 and 20, p25 = 9.5
        let recs = vec![series("a", 6), series("b", 20), series("c", 20)];
        let plan = build_split(&recs, 2, 2).unwrap();
        assert!(plan.percentile_25 > 6.0);
        assert_eq!(plan.series[0].train_starts, 0..1);
        assert_eq!(plan.series[0].validation_start, None);
    }

    #[test]
    fn two_horizons_beyond_window_gives_one_training_window() {
        // T = nH + 2H = 8 with H=2, n=2
        let recs = vec![series("a", 8)];
        let plan = build_split(&recs, 2, 2).unwrap();
        let s = &plan.series[0];
        assert_eq!(s.validation_start, Some(2));
        assert_eq!(s.train_starts.len(), 8 - 2 - 6 + 1);
        let last_train_target_end = s.train_starts.end - 1 + 6;
        assert!(last_train_target_end <= 2 + 4, "training targets end before validation targets");
    }

    #[test]
    fn short_series_is_left_padded() {
        let recs = vec![series("a", 4), series("b", 30)];
        let plan = build_split(&recs, 2, 2).unwrap();
        assert_eq!(plan.series[0].pad, 2);
        let (values, mask) = plan.window(&recs, 0, 0);
        assert_eq!(values.len(), 6);
        assert_eq!(&mask, &[false, false, true, true, true, true]);
        assert_eq!(values[0], recs[0].train[0]);
        assert_eq!(&values[2..], &recs[0].train[..]);
    }

    #[test]
    fn series_too_short_for_targets_yields_nothing() {
        let recs = vec![series("a", 2)];
        assert!(matches!(build_split(&recs, 2, 2), Err(Error::Config(_))));
        assert!(build_split(&[], 2, 2).is_err());
    }

    #[test]
    fn split_depends_on_lengths_only() {
        let recs = vec![series("a", 30), series("b", 50)];
        let mut perturbed = recs.clone();
        perturbed[1].train[10] = 999.0;
        assert_eq!(build_split(&recs, 3, 2).unwrap(), build_split(&perturbed, 3, 2).unwrap());
    }

    #[test]
    fn single_window_batch_repeats() {
        let recs = vec![series("a", 5)];
        let plan = build_split(&recs, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_batch(&plan, &recs, 4, &mut rng);
        for i in 1..4 {
            assert_eq!(b.window(i), b.window(0));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let recs = vec![series("a", 40), series("b", 90)];
        let plan = build_split(&recs, 3, 2).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..3).map(|_| sample_batch(&plan, &recs, 8, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn batch_mu_uses_input_portion_only() {
        let recs = vec![series("a", 40)];
        let plan = build_split(&recs, 3, 2).unwrap();
        let b = plan.validation_batch(&recs);
        let w = b.window(0);
        let expected = w[3..6].iter().sum::<f64>() / 3.0;
        assert_eq!(b.mu[0], expected);
    }
}
