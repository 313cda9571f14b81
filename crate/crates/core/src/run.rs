//! Run orchestration behind the command-line front end: configuration
//! layering, reproducible run directories, training over several seeds,
//! evaluation, forecasting, baselines and ablation sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use pitf_tensor::no_grad;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::checkpoint::{self, CheckpointMeta};
use crate::data::{build_split, load_m4_csv, Frequency, SeriesRecord};
use crate::error::{Error, Result};
use crate::metrics::{median, Baseline, EvalReport, ForecastSet};
use crate::model::{PIConfig, PIModel, SkipMode};
use crate::train::{train, EpochRecord, TrainConfig, TrainOutcome};
use crate::transformer::{Connector, PosEncoding, TransformerConfig};

/// Architecture choices independent of the frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Defaults to `4 * d_model`.
    pub d_ff: Option<usize>,
    pub skip_mode: SkipMode,
    pub connector: Connector,
    pub pos_encoding: PosEncoding,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            d_model: 32,
            n_layers: 4,
            n_heads: 4,
            d_ff: None,
            skip_mode: SkipMode::SkipGate,
            connector: Connector::Rezero,
            pos_encoding: PosEncoding::Rotary,
        }
    }
}

impl ModelSettings {
    pub fn pi_config(&self, freq: Frequency) -> PIConfig {
        let meta = freq.meta();
        PIConfig {
            horizon: meta.horizon,
            window_multiple: meta.window_multiple,
            skip_mode: self.skip_mode,
            transformer: TransformerConfig {
                n_layers: self.n_layers,
                n_heads: self.n_heads,
                d_model: self.d_model,
                d_ff: self.d_ff.unwrap_or(4 * self.d_model),
                connector: self.connector,
                pos_encoding: self.pos_encoding,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Small batches and a short schedule for a single CPU.
    Desk,
    /// Full-scale schedule: 128 batches of 1024 windows per epoch.
    Paper,
}

impl Profile {
    pub fn train_config(self) -> TrainConfig {
        match self {
            Profile::Desk => TrainConfig::desk(),
            Profile::Paper => TrainConfig::paper(),
        }
    }
}

/// Everything that determines a training run. Written to `config.json` in
/// every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub frequency: Frequency,
    pub data_root: PathBuf,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Fraction of series kept per frequency (stratified by length).
    pub subsample: Option<f64>,
}

impl RunConfig {
    pub fn new(frequency: Frequency, data_root: PathBuf, profile: Profile) -> Self {
        RunConfig {
            frequency,
            data_root,
            model: ModelSettings::default(),
            train: profile.train_config(),
            seeds: vec![0],
            out_dir: PathBuf::from("runs/latest"),
            workers: 1,
            subsample: None,
        }
    }

    /// Overlays a (possibly partial) JSON document onto this configuration.
    pub fn merge_json(&self, overlay: &Value) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, overlay);
        serde_json::from_value(base).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn merge_file(&self, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let overlay: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.merge_json(&overlay)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if let Some(f) = self.subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("subsample fraction {f} is not in (0, 1]")));
            }
        }
        self.train.validate()?;
        self.model.pi_config(self.frequency).validate()
    }
}

fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Loads train and (when present) test files of one frequency.
pub fn load_data(root: &Path, freq: Frequency, require_test: bool) -> Result<Vec<SeriesRecord>> {
    let train = root.join(freq.train_file());
    let test = root.join(freq.test_file());
    if !train.is_file() {
        return Err(Error::Data(format!("training file {} not found", train.display())));
    }
    if require_test && !test.is_file() {
        return Err(Error::Data(format!("test file {} not found", test.display())));
    }
    let records = load_m4_csv(&train, test.is_file().then_some(test.as_path()), freq)?;
    if records.is_empty() {
        return Err(Error::Data(format!("{} holds no series", train.display())));
    }
    Ok(records)
}

/// Keeps `ceil(fraction * n)` series, sampled evenly across the length
/// ordering so that short and long series stay represented.
pub fn subsample(records: &[SeriesRecord], fraction: f64, seed: u64) -> Vec<SeriesRecord> {
    let keep = ((records.len() as f64 * fraction).ceil() as usize).clamp(1, records.len());
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|&i| records[i].len());
    let mut picked: Vec<usize> = (0..keep).map(|k| order[k * records.len() / keep]).collect();
    picked.sort_unstable();
    picked.into_iter().map(|i| records[i].clone()).collect()
}

/// Input window (last `nH` training values, left-padded with the first value
/// when the series is shorter).
pub fn input_window(train: &[f64], input_len: usize) -> Vec<f64> {
    let tail = &train[train.len().saturating_sub(input_len)..];
    let mut w = vec![train[0]; input_len - tail.len()];
    w.extend_from_slice(tail);
    w
}

/// Autoregressive forecasts for every record, computed in chunks.
pub fn forecast_records(model: &PIModel, records: &[SeriesRecord], chunk: usize) -> Result<ForecastSet> {
    let n_in = model.config.input_len();
    let mut set = ForecastSet::new(None);
    for part in records.chunks(chunk.max(1)) {
        let windows: Vec<Vec<f64>> = part.iter().map(|r| input_window(&r.train, n_in)).collect();
        let forecasts = no_grad(|| model.forecast_batch(&windows))?;
        for (r, f) in part.iter().zip(forecasts) {
            set.insert(r.id.clone(), f);
        }
    }
    Ok(set)
}

/// Fresh model for `seed`; initialisation and batch sampling use separate
/// streams of the same seed.
pub fn init_model(config: PIConfig, seed: u64) -> Result<PIModel> {
    PIModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Trains one seed in memory.
pub fn train_one(
    records: &[SeriesRecord],
    freq: Frequency,
    settings: &ModelSettings,
    train_config: &TrainConfig,
    seed: u64,
    on_epoch: impl FnMut(&EpochRecord, &crate::train::EpochTiming),
) -> Result<TrainOutcome> {
    let config = settings.pi_config(freq);
    let plan = build_split(records, config.horizon, config.window_multiple)?;
    let model = init_model(config, seed)?;
    let tc = TrainConfig {
        seed,
        ..train_config.clone()
    };
    train(model, records, &plan, freq.meta().seasonality, &tc, on_epoch)
}

/// Runs `jobs` on up to `workers` threads; results keep the job order.
pub fn run_parallel<T: Send, R: Send>(jobs: Vec<T>, workers: usize, f: impl Fn(T) -> R + Sync) -> Vec<R> {
    let n = jobs.len();
    let queue: Vec<Mutex<Option<T>>> = jobs.into_iter().map(|j| Mutex::new(Some(j))).collect();
    let results: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let job = queue[i].lock().expect("queue lock").take().expect("job taken once");
                let r = f(job);
                *results[i].lock().expect("result lock") = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().expect("result lock").expect("every job ran"))
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub checkpoint: PathBuf,
}

fn prepare_run_dir(out: &Path) -> Result<PathBuf> {
    if out.exists() && fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_some() {
        return Err(Error::Config(format!("run directory {} already exists and is not empty", out.display())));
    }
    let mut staging = out.as_os_str().to_owned();
    staging.push(".incomplete");
    let staging = PathBuf::from(staging);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    Ok(staging)
}

fn finish_run_dir(staging: &Path, out: &Path) -> Result<()> {
    if out.exists() {
        fs::remove_dir(out).map_err(|e| Error::io(out, e))?;
    }
    fs::rename(staging, out).map_err(|e| Error::io(out, e))
}

/// Trains one model per seed and writes a self-contained run directory:
/// `config.json`, `summary.json` and, per seed, `seed-<n>/model.ckpt`,
/// `history.jsonl` (deterministic) and `timing.jsonl` (wall clock).
///
/// Data and configuration are validated before anything is created; a run
/// that fails midway leaves no directory behind.
pub fn cmd_train(config: &RunConfig, mut log: impl FnMut(&str) + Send) -> Result<Vec<SeedSummary>> {
    config.validate()?;
    let mut records = load_data(&config.data_root, config.frequency, false)?;
    if let Some(f) = config.subsample {
        records = subsample(&records, f, 0);
    }
    let pi = config.model.pi_config(config.frequency);
    build_split(&records, pi.horizon, pi.window_multiple)?;
    let staging = prepare_run_dir(&config.out_dir)?;
    let result = (|| -> Result<Vec<SeedSummary>> {
        write_json(&staging.join("config.json"), config)?;
        let log = Mutex::new(&mut log);
        let outcomes = run_parallel(config.seeds.clone(), config.workers, |seed| {
            let dir = staging.join(format!("seed-{seed}"));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let outcome = train_one(&records, config.frequency, &config.model, &config.train, seed, |r, t| {
                let val = r.validation_loss.map_or("-".to_string(), |v| format!("{v:.4}"));
                (log.lock().expect("log lock"))(&format!(
                    "seed {seed} epoch {:>3}  train {:.4} ± {:.4}  val {val}  {:.1}s",
                    r.epoch, r.train_loss_mean, r.train_loss_std, t.wall_seconds
                ));
            })?;
            write_jsonl(&dir.join("history.jsonl"), &outcome.history)?;
            write_jsonl(&dir.join("timing.jsonl"), &outcome.timings)?;
            let ckpt = dir.join("model.ckpt");
            checkpoint::save(
                &ckpt,
                &outcome.model,
                &CheckpointMeta {
                    epoch: outcome.best_epoch,
                    validation_loss: outcome.history[outcome.best_epoch - 1].validation_loss,
                    seed,
                },
            )?;
            Ok(SeedSummary {
                seed,
                best_epoch: outcome.best_epoch,
                best_loss: outcome.best_loss,
                epochs_run: outcome.history.len(),
                stopped_early: outcome.stopped_early,
                checkpoint: config.out_dir.join(format!("seed-{seed}")).join("model.ckpt"),
            })
        });
        let summaries = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        write_json(&staging.join("summary.json"), &summaries)?;
        Ok(summaries)
    })();
    match result {
        Ok(s) => {
            finish_run_dir(&staging, &config.out_dir)?;
            Ok(s)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

/// Forecast sources for evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvaluateRequest {
    pub frequency: Option<Frequency>,
    pub data_root: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub forecasts: Vec<PathBuf>,
    pub ensemble: bool,
    pub median_of: bool,
    pub subsample: Option<f64>,
}

/// Reports produced by `evaluate`: one per source, or a single combined one.
#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub label: String,
    pub report: EvalReport,
}

fn model_frequency(model: &PIModel, explicit: Option<Frequency>) -> Result<Frequency> {
    let h = model.config.horizon;
    match explicit {
        Some(f) if f.meta().horizon == h => Ok(f),
        Some(f) => Err(Error::Config(format!(
            "checkpoint horizon {h} does not match {f} (horizon {})",
            f.meta().horizon
        ))),
        None => {
            let matches: Vec<Frequency> = Frequency::ALL.into_iter().filter(|f| f.meta().horizon == h).collect();
            match matches.as_slice() {
                [f] => Ok(*f),
                _ => Err(Error::Config(format!("cannot infer the frequency of a horizon-{h} model; pass --freq"))),
            }
        }
    }
}

/// Scores checkpoints and/or forecast files against the test split.
pub fn cmd_evaluate(req: &EvaluateRequest) -> Result<Vec<Evaluation>> {
    if req.checkpoints.is_empty() && req.forecasts.is_empty() {
        return Err(Error::Config("nothing to evaluate: pass checkpoints or forecast files".into()));
    }
    let mut models = Vec::new();
    for path in &req.checkpoints {
        let (model, meta) = checkpoint::load(path)?;
        models.push((path.clone(), model, meta));
    }
    let freq = match (req.frequency, models.first()) {
        (f, Some((_, m, _))) => model_frequency(m, f)?,
        (Some(f), None) => f,
        (None, None) => return Err(Error::Config("--freq is required when scoring forecast files".into())),
    };
    for (path, m, _) in &models {
        model_frequency(m, Some(freq)).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    let mut records = load_data(&req.data_root, freq, true)?;
    if let Some(f) = req.subsample {
        records = subsample(&records, f, 0);
    }
    let mut sets = Vec::new();
    for (path, model, meta) in &models {
        let mut set = forecast_records(model, &records, 64)?;
        set.provenance = Some(format!("{} (seed {})", path.display(), meta.seed));
        sets.push(set);
    }
    for path in &req.forecasts {
        let mut set = ForecastSet::read_csv(path)?;
        // combined submission files hold every frequency; keep the relevant rows
        set.forecasts.retain(|id, _| records.iter().any(|r| &r.id == id));
        sets.push(set);
    }
    if req.ensemble {
        let set = crate::metrics::ensemble_mean(&sets)?;
        let report = EvalReport::evaluate(&records, &set)?;
        return Ok(vec![Evaluation {
            label: format!("ensemble of {}", sets.len()),
            report,
        }]);
    }
    let mut out = Vec::new();
    for set in &sets {
        out.push(Evaluation {
            label: set.provenance.clone().unwrap_or_default(),
            report: EvalReport::evaluate(&records, set)?,
        });
    }
    if req.median_of {
        let reports: Vec<EvalReport> = out.iter().map(|e| e.report.clone()).collect();
        return Ok(vec![Evaluation {
            label: format!("median of {}", reports.len()),
            report: EvalReport::median(&reports)?,
        }]);
    }
    Ok(out)
}

/// Writes forecasts of a checkpoint for every series of a frequency.
pub fn cmd_forecast(checkpoint_path: &Path, data_root: &Path, freq: Option<Frequency>, out: &Path) -> Result<usize> {
    let (model, meta) = checkpoint::load(checkpoint_path)?;
    let freq = model_frequency(&model, freq)?;
    let records = load_data(data_root, freq, false)?;
    let mut set = forecast_records(&model, &records, 64)?;
    set.provenance = Some(format!("{} (seed {})", checkpoint_path.display(), meta.seed));
    set.write_csv(out)?;
    Ok(set.len())
}

/// Writes baseline forecasts; also scores them when test values exist.
pub fn cmd_baseline(data_root: &Path, freq: Frequency, method: Baseline, out: &Path) -> Result<Option<EvalReport>> {
    let records = load_data(data_root, freq, false)?;
    let set = ForecastSet::baseline(&records, method);
    set.write_csv(out)?;
    if records.iter().all(|r| r.test.len() == freq.meta().horizon) {
        return Ok(Some(EvalReport::evaluate(&records, &set)?));
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Skip/gate variants: none, skip_only, skip_gate.
    Skip,
    /// Residual connector x positional encoding.
    Norm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub base: RunConfig,
    pub study: Study,
    pub d_models: Vec<usize>,
    pub skip_modes: Vec<SkipMode>,
    pub connectors: Vec<Connector>,
    pub pos_encodings: Vec<PosEncoding>,
}

impl AblationConfig {
    /// Model settings of every arm, in sweep order.
    pub fn arms(&self) -> Vec<ModelSettings> {
        let mut arms = Vec::new();
        for &d in &self.d_models {
            match self.study {
                Study::Skip => {
                    for &skip_mode in &self.skip_modes {
                        arms.push(ModelSettings {
                            d_model: d,
                            skip_mode,
                            d_ff: None,
                            ..self.base.model.clone()
                        });
                    }
                }
                Study::Norm => {
                    for &connector in &self.connectors {
                        for &pos_encoding in &self.pos_encodings {
                            arms.push(ModelSettings {
                                d_model: d,
                                connector,
                                pos_encoding,
                                d_ff: None,
                                ..self.base.model.clone()
                            });
                        }
                    }
                }
            }
        }
        arms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub owa: f64,
    pub r05: f64,
    pub smape: f64,
    pub mase: f64,
    pub best_epoch: usize,
    /// Mean training loss of epoch 5, if training lasted that long.
    pub epoch5_train_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub settings: ModelSettings,
    pub label: String,
    pub owa_min: f64,
    pub owa_median: f64,
    pub owa_max: f64,
    pub scores: Vec<SeedScore>,
}

/// Serde name of a unit enum variant, e.g. `skip_gate`.
fn variant_name(v: &impl Serialize) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn arm_label(s: &ModelSettings, study: Study) -> String {
    match study {
        Study::Skip => format!("{} d={}", variant_name(&s.skip_mode), s.d_model),
        Study::Norm => format!(
            "{}+{} d={}",
            variant_name(&s.connector),
            variant_name(&s.pos_encoding),
            s.d_model
        ),
    }
}

/// Trains and scores one (arm, seed) pair on already loaded records.
pub fn score_arm_seed(
    records: &[SeriesRecord],
    freq: Frequency,
    settings: &ModelSettings,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<(SeedScore, TrainOutcome)> {
    let outcome = train_one(records, freq, settings, train_config, seed, |_, _| {})?;
    let set = forecast_records(&outcome.model, records, 64)?;
    let report = EvalReport::evaluate(records, &set)?;
    let score = SeedScore {
        seed,
        owa: report.total.owa,
        r05: report.total.r05,
        smape: report.total.smape,
        mase: report.total.mase,
        best_epoch: outcome.best_epoch,
        epoch5_train_loss: outcome.history.get(4).map(|r| r.train_loss_mean),
    };
    Ok((score, outcome))
}

/// Sweeps every arm over every seed and summarises OWA per arm. Results are
/// written to `<out_dir>/ablation.json` with the resolved configuration.
pub fn cmd_ablate(config: &AblationConfig, mut log: impl FnMut(&str) + Send) -> Result<Vec<ArmResult>> {
    let base = &config.base;
    base.validate()?;
    let arms = config.arms();
    if arms.is_empty() {
        return Err(Error::Config("the sweep has no arms".into()));
    }
    for arm in &arms {
        arm.pi_config(base.frequency).validate()?;
    }
    let mut records = load_data(&base.data_root, base.frequency, true)?;
    if let Some(f) = base.subsample {
        records = subsample(&records, f, 0);
    }
    let staging = prepare_run_dir(&base.out_dir)?;
    let result = (|| -> Result<Vec<ArmResult>> {
        let jobs: Vec<(usize, u64)> = (0..arms.len())
            .flat_map(|a| base.seeds.iter().map(move |&s| (a, s)))
            .collect();
        let log = Mutex::new(&mut log);
        let scores = run_parallel(jobs.clone(), base.workers, |(a, seed)| {
            let (score, _) = score_arm_seed(&records, base.frequency, &arms[a], &base.train, seed)?;
            (log.lock().expect("log lock"))(&format!(
                "{} seed {seed}: OWA {:.4}",
                arm_label(&arms[a], config.study),
                score.owa
            ));
            Ok::<_, Error>(score)
        });
        let mut per_arm: Vec<Vec<SeedScore>> = vec![Vec::new(); arms.len()];
        for ((a, _), s) in jobs.iter().zip(scores) {
            per_arm[*a].push(s?);
        }
        let results: Vec<ArmResult> = arms
            .iter()
            .zip(per_arm)
            .map(|(settings, scores)| {
                let owas: Vec<f64> = scores.iter().map(|s| s.owa).collect();
                ArmResult {
                    label: arm_label(settings, config.study),
                    settings: settings.clone(),
                    owa_min: owas.iter().copied().fold(f64::INFINITY, f64::min),
                    owa_median: median(&owas),
                    owa_max: owas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    scores,
                }
            })
            .collect();
        write_json(&staging.join("config.json"), config)?;
        write_json(&staging.join("ablation.json"), &results)?;
        Ok(results)
    })();
    match result {
        Ok(r) => {
            finish_run_dir(&staging, &base.out_dir)?;
            Ok(r)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

/// Plain-text table of an ablation sweep.
pub fn ablation_table(results: &[ArmResult]) -> String {
    let mut out = Vec::new();
    writeln!(out, "{:<28} {:>6} {:>9} {:>9} {:>9}", "arm", "seeds", "OWA min", "median", "max").unwrap();
    for r in results {
        writeln!(
            out,
            "{:<28} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            r.label,
            r.scores.len(),
            r.owa_min,
            r.owa_median,
            r.owa_max
        )
        .unwrap();
    }
    String::from_utf8(out).expect("ascii table")
}
