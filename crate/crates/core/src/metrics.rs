//! Point-forecast accuracy: sMAPE, MASE, OWA against the Naïve2 benchmark,
//! the normalised deviation R0.5, simple baselines, ensembling and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_rows, Frequency, SeriesRecord};
use crate::error::{Error, Result};

/// Symmetric MAPE of one series in `[0, 200]`. Points where both the actual
/// and the forecast are zero contribute 0.
pub fn smape(forecast: &[f64], actual: &[f64]) -> f64 {
    let h = actual.len() as f64;
    let total: f64 = forecast
        .iter()
        .zip(actual)
        .map(|(f, y)| {
            let denom = f.abs() + y.abs();
            if denom == 0.0 {
                0.0
            } else {
                (y - f).abs() / denom
            }
        })
        .sum();
    200.0 / h * total
}

/// Mean absolute lag-`s` difference over a whole in-sample series; `None`
/// when it is zero or the series is too short.
pub fn seasonal_scale(insample: &[f64], s: usize) -> Option<f64> {
    if s == 0 || insample.len() <= s {
        return None;
    }
    let total: f64 = insample.windows(s + 1).map(|w| (w[s] - w[0]).abs()).sum();
    let scale = total / (insample.len() - s) as f64;
    (scale > 0.0).then_some(scale)
}

/// MASE of one series, scaled by the in-sample seasonal naive error.
pub fn mase(forecast: &[f64], actual: &[f64], insample: &[f64], s: usize) -> Option<f64> {
    let scale = seasonal_scale(insample, s)?;
    let mae = forecast.iter().zip(actual).map(|(f, y)| (y - f).abs()).sum::<f64>() / actual.len() as f64;
    Some(mae / scale)
}

/// `0.5 * (smape / smape_naive2 + mase / mase_naive2)`.
pub fn owa(smape: f64, mase: f64, naive2_smape: f64, naive2_mase: f64) -> Result<f64> {
    if !(naive2_smape > 0.0 && naive2_mase > 0.0) {
        return Err(Error::Data(format!(
            "OWA needs positive baseline scores, got sMAPE {naive2_smape} and MASE {naive2_mase}"
        )));
    }
    Ok(0.5 * (smape / naive2_smape + mase / naive2_mase))
}

/// `sum |y - f| / sum |y|` pooled over every series and horizon step.
pub fn r05<'a>(pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (forecast, actual) in pairs {
        for (f, y) in forecast.iter().zip(actual) {
            num += (y - f).abs();
            den += y.abs();
        }
    }
    if den == 0.0 {
        return Err(Error::Data("R0.5 undefined: actuals sum to zero".into()));
    }
    Ok(num / den)
}

/// Lag-`k` autocorrelation, normalised by the full-sample variance.
pub fn acf(x: &[f64], k: usize) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let num: f64 = (k..x.len()).map(|i| (x[i] - m) * (x[i - k] - m)).sum();
    let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// 90% one-sided test for seasonality at lag `s`:
/// `|r_s| > 1.645 * sqrt((1 + 2 * sum_{i<s} r_i^2) / T)`.
/// Never seasonal for `s <= 1` or fewer than `3s` observations.
pub fn is_seasonal(x: &[f64], s: usize) -> bool {
    if s <= 1 || x.len() < 3 * s {
        return false;
    }
    let sum_sq: f64 = (1..s).map(|i| acf(x, i).powi(2)).sum();
    let limit = 1.645 * ((1.0 + 2.0 * sum_sq) / x.len() as f64).sqrt();
    acf(x, s).abs() > limit
}

/// Centred moving average of order `s` (a 2x`s` average for even `s`), with
/// `NaN` where the window does not fit.
pub fn centred_moving_average(x: &[f64], s: usize) -> Vec<f64> {
    let n = x.len();
    let weights: Vec<f64> = if s.is_multiple_of(2) {
        let mut w = vec![1.0 / s as f64; s + 1];
        w[0] = 0.5 / s as f64;
        w[s] = 0.5 / s as f64;
        w
    } else {
        vec![1.0 / s as f64; s]
    };
    let half = weights.len() / 2;
    (0..n)
        .map(|i| {
            if i < half || i + half >= n {
                f64::NAN
            } else {
                weights.iter().enumerate().map(|(k, w)| w * x[i + k - half]).sum()
            }
        })
        .collect()
}

/// Multiplicative seasonal indices by classical decomposition, one per phase
/// `i mod s`, normalised to mean 1.
pub fn seasonal_indices(x: &[f64], s: usize) -> Vec<f64> {
    let trend = centred_moving_average(x, s);
    let mut sums = vec![0.0; s];
    let mut counts = vec![0usize; s];
    for (i, (v, t)) in x.iter().zip(&trend).enumerate() {
        if t.is_finite() {
            sums[i % s] += v / t;
            counts[i % s] += 1;
        }
    }
    let raw: Vec<f64> = sums.iter().zip(&counts).map(|(a, &c)| a / c as f64).collect();
    let mean = raw.iter().sum::<f64>() / s as f64;
    raw.iter().map(|v| v / mean).collect()
}

/// Naïve2: persistence on the seasonally adjusted series, re-seasonalised,
/// when [`is_seasonal`] holds; plain persistence otherwise.
pub fn naive2(x: &[f64], s: usize, h: usize) -> Vec<f64> {
    let n = x.len();
    if !is_seasonal(x, s) {
        return naive(x, h);
    }
    let idx = seasonal_indices(x, s);
    let last = x[n - 1] / idx[(n - 1) % s];
    (0..h).map(|j| last * idx[(n + j) % s]).collect()
}

/// Last value repeated.
pub fn naive(x: &[f64], h: usize) -> Vec<f64> {
    vec![x[x.len() - 1]; h]
}

/// Repeats the last observed season.
pub fn seasonal_naive(x: &[f64], s: usize, h: usize) -> Vec<f64> {
    let n = x.len();
    if s == 0 || n < s {
        return naive(x, h);
    }
    (0..h).map(|j| x[n - s + j % s]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Naive2,
    SeasonalNaive,
    Naive,
}

impl Baseline {
    pub fn forecast(self, x: &[f64], s: usize, h: usize) -> Vec<f64> {
        match self {
            Baseline::Naive2 => naive2(x, s, h),
            Baseline::SeasonalNaive => seasonal_naive(x, s, h),
            Baseline::Naive => naive(x, h),
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "naive2" => Ok(Baseline::Naive2),
            "snaive" | "seasonal_naive" => Ok(Baseline::SeasonalNaive),
            "naive" => Ok(Baseline::Naive),
            other => Err(Error::Config(format!("unknown baseline '{other}'"))),
        }
    }
}

/// Point forecasts keyed by series id, in raw data space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub forecasts: BTreeMap<String, Vec<f64>>,
    /// Where the forecasts came from (checkpoint path, seed, baseline name).
    pub provenance: Option<String>,
}

impl ForecastSet {
    pub fn new(provenance: Option<String>) -> Self {
        ForecastSet {
            forecasts: BTreeMap::new(),
            provenance,
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, values: Vec<f64>) {
        self.forecasts.insert(id.into(), values);
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.forecasts.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.forecasts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forecasts.is_empty()
    }

    /// Baseline forecasts for every record.
    pub fn baseline(records: &[SeriesRecord], method: Baseline) -> Self {
        let mut set = ForecastSet::new(Some(format!("{method:?}").to_lowercase()));
        for r in records {
            let meta = r.frequency.meta();
            set.insert(r.id.clone(), method.forecast(&r.train, meta.seasonality, meta.horizon));
        }
        set
    }

    /// Reads `id,F1,...,FH` rows; a header line is skipped and trailing `NA`
    /// fields (as in combined M4 submission files) are ignored.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut set = ForecastSet::new(Some(path.display().to_string()));
        for (line, id, values) in read_rows(path)? {
            if set.forecasts.insert(id.clone(), values).is_some() {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("duplicate series id {id}"),
                });
            }
        }
        Ok(set)
    }

    /// Writes `id,F1,...,FH` rows; shorter rows are padded with `NA`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let width = self.forecasts.values().map(Vec::len).max().unwrap_or(0);
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        let mut header = vec!["id".to_string()];
        header.extend((1..=width).map(|i| format!("F{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for (id, values) in &self.forecasts {
            let mut row = vec![id.clone()];
            row.extend(values.iter().map(|v| format!("{v:?}")));
            row.extend(std::iter::repeat_n("NA".to_string(), width - values.len()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Pointwise mean of several forecast sets with identical coverage.
pub fn ensemble_mean(sets: &[ForecastSet]) -> Result<ForecastSet> {
    let first = sets.first().ok_or_else(|| Error::Config("nothing to ensemble".into()))?;
    let all: BTreeSet<&String> = sets.iter().flat_map(|s| s.forecasts.keys()).collect();
    let missing: Vec<String> = all
        .iter()
        .filter(|id| sets.iter().any(|s| !s.forecasts.contains_key(id.as_str())))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }
    let mut out = ForecastSet::new(Some(format!("mean of {} forecast sets", sets.len())));
    for (id, values) in &first.forecasts {
        let mut acc = vec![0.0; values.len()];
        for s in sets {
            let other = &s.forecasts[id];
            if other.len() != acc.len() {
                return Err(Error::Data(format!("series {id}: forecast lengths differ across sets")));
            }
            acc.iter_mut().zip(other).for_each(|(a, v)| *a += v);
        }
        out.insert(id.clone(), acc.into_iter().map(|v| v / sets.len() as f64).collect());
    }
    Ok(out)
}

/// Scores of one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyScores {
    pub frequency: Frequency,
    pub series: usize,
    pub smape: f64,
    pub mase: f64,
    pub owa: f64,
    pub r05: f64,
    pub naive2_smape: f64,
    pub naive2_mase: f64,
    /// Series left out of MASE because their in-sample scale is zero.
    pub mase_excluded: usize,
    /// Pooled `sum |y - f|` and `sum |y|`, kept for the overall R0.5.
    pub abs_error: f64,
    pub abs_actual: f64,
}

/// Overall scores. sMAPE and MASE (model and Naïve2) are series-count
/// weighted means of the per-frequency values; OWA is formed from those
/// totals as in the M4 competition, R0.5 is pooled over all points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalScores {
    pub series: usize,
    pub smape: f64,
    pub mase: f64,
    pub owa: f64,
    pub r05: f64,
    pub naive2_smape: f64,
    pub naive2_mase: f64,
    /// Series-count weighted mean of the per-frequency OWA values.
    pub owa_count_weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<FrequencyScores>,
    pub total: TotalScores,
}

/// Scores `forecasts` on `records`, which must all share one frequency and
/// carry test values.
pub fn score_frequency(records: &[SeriesRecord], forecasts: &ForecastSet) -> Result<FrequencyScores> {
    let first = records.first().ok_or_else(|| Error::Data("no series to evaluate".into()))?;
    let frequency = first.frequency;
    let meta = frequency.meta();
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !forecasts.forecasts.contains_key(&r.id))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }
    let (mut s_model, mut s_naive, mut m_model, mut m_naive) = (0.0, 0.0, 0.0, 0.0);
    let (mut abs_error, mut abs_actual) = (0.0, 0.0);
    let mut mase_count = 0usize;
    for r in records {
        if r.frequency != frequency {
            return Err(Error::Data(format!("series {} is {}, expected {frequency}", r.id, r.frequency)));
        }
        if r.test.len() != meta.horizon {
            return Err(Error::Series {
                id: r.id.clone(),
                msg: format!("has {} test values, expected {}", r.test.len(), meta.horizon),
            });
        }
        let f = &forecasts.forecasts[&r.id];
        if f.len() != meta.horizon {
            return Err(Error::Series {
                id: r.id.clone(),
                msg: format!("forecast has {} values, expected {}", f.len(), meta.horizon),
            });
        }
        let n2 = naive2(&r.train, meta.seasonality, meta.horizon);
        s_model += smape(f, &r.test);
        s_naive += smape(&n2, &r.test);
        if let (Some(a), Some(b)) = (
            mase(f, &r.test, &r.train, meta.seasonality),
            mase(&n2, &r.test, &r.train, meta.seasonality),
        ) {
            m_model += a;
            m_naive += b;
            mase_count += 1;
        }
        for (p, y) in f.iter().zip(&r.test) {
            abs_error += (y - p).abs();
            abs_actual += y.abs();
        }
    }
    let n = records.len() as f64;
    let mc = mase_count.max(1) as f64;
    let (smape_f, mase_f, n2_smape, n2_mase) = (s_model / n, m_model / mc, s_naive / n, m_naive / mc);
    if abs_actual == 0.0 {
        return Err(Error::Data("R0.5 undefined: actuals sum to zero".into()));
    }
    Ok(FrequencyScores {
        frequency,
        series: records.len(),
        smape: smape_f,
        mase: mase_f,
        owa: owa(smape_f, mase_f, n2_smape, n2_mase)?,
        r05: abs_error / abs_actual,
        naive2_smape: n2_smape,
        naive2_mase: n2_mase,
        mase_excluded: records.len() - mase_count,
        abs_error,
        abs_actual,
    })
}

impl EvalReport {
    pub fn from_rows(rows: Vec<FrequencyScores>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("empty report".into()));
        }
        let series: usize = rows.iter().map(|r| r.series).sum();
        let weighted = |f: fn(&FrequencyScores) -> f64| {
            rows.iter().map(|r| r.series as f64 * f(r)).sum::<f64>() / series as f64
        };
        let smape = weighted(|r| r.smape);
        let mase = weighted(|r| r.mase);
        let naive2_smape = weighted(|r| r.naive2_smape);
        let naive2_mase = weighted(|r| r.naive2_mase);
        let total = TotalScores {
            series,
            smape,
            mase,
            owa: owa(smape, mase, naive2_smape, naive2_mase)?,
            r05: rows.iter().map(|r| r.abs_error).sum::<f64>() / rows.iter().map(|r| r.abs_actual).sum::<f64>(),
            naive2_smape,
            naive2_mase,
            owa_count_weighted: weighted(|r| r.owa),
        };
        Ok(EvalReport { rows, total })
    }

    /// Scores a forecast set over records of any mix of frequencies.
    pub fn evaluate(records: &[SeriesRecord], forecasts: &ForecastSet) -> Result<Self> {
        let mut rows = Vec::new();
        for freq in Frequency::ALL {
            let subset: Vec<SeriesRecord> = records.iter().filter(|r| r.frequency == freq).cloned().collect();
            if !subset.is_empty() {
                rows.push(score_frequency(&subset, forecasts)?);
            }
        }
        Self::from_rows(rows)
    }

    /// Field-wise median over reports with identical frequency rows.
    pub fn median(reports: &[EvalReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| Error::Config("no reports to combine".into()))?;
        let freqs: Vec<Frequency> = first.rows.iter().map(|r| r.frequency).collect();
        if reports.iter().any(|r| r.rows.iter().map(|x| x.frequency).collect::<Vec<_>>() != freqs) {
            return Err(Error::Data("reports cover different frequencies".into()));
        }
        let med = |values: Vec<f64>| median(&values);
        let rows = (0..freqs.len())
            .map(|i| {
                let col = |f: fn(&FrequencyScores) -> f64| med(reports.iter().map(|r| f(&r.rows[i])).collect());
                FrequencyScores {
                    smape: col(|r| r.smape),
                    mase: col(|r| r.mase),
                    owa: col(|r| r.owa),
                    r05: col(|r| r.r05),
                    abs_error: col(|r| r.abs_error),
                    ..first.rows[i].clone()
                }
            })
            .collect();
        let tot = |f: fn(&TotalScores) -> f64| med(reports.iter().map(|r| f(&r.total)).collect());
        Ok(EvalReport {
            rows,
            total: TotalScores {
                smape: tot(|t| t.smape),
                mase: tot(|t| t.mase),
                owa: tot(|t| t.owa),
                r05: tot(|t| t.r05),
                owa_count_weighted: tot(|t| t.owa_count_weighted),
                ..first.total.clone()
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>7} {:>9} {:>8} {:>7} {:>7} {:>11} {:>10}",
            "frequency", "series", "sMAPE", "MASE", "OWA", "R0.5", "N2 sMAPE", "N2 MASE"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>7} {:>9.3} {:>8.3} {:>7.3} {:>7.3} {:>11.3} {:>10.3}",
                r.frequency.to_string(),
                r.series,
                r.smape,
                r.mase,
                r.owa,
                r.r05,
                r.naive2_smape,
                r.naive2_mase
            )?;
        }
        let t = &self.total;
        write!(
            f,
            "{:<10} {:>7} {:>9.3} {:>8.3} {:>7.3} {:>7.3} {:>11.3} {:>10.3}",
            "total", t.series, t.smape, t.mase, t.owa, t.r05, t.naive2_smape, t.naive2_mase
        )
    }
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
