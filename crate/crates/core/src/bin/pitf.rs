use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pitf::data::Frequency;
use pitf::metrics::Baseline;
use pitf::model::SkipMode;
use pitf::run::{self, AblationConfig, EvaluateRequest, Profile, RunConfig, Study};
use pitf::transformer::{Connector, PosEncoding};
use pitf::Error;

/// Transformer forecaster with persistence initialization.
#[derive(Parser)]
#[command(name = "pitf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per seed and write a run directory.
    Train(TrainArgs),
    /// Score checkpoints or forecast files on the test split.
    Evaluate(EvaluateArgs),
    /// Write forecasts of a checkpoint for every series.
    Forecast(ForecastArgs),
    /// Sweep skip/gate or connector/encoding variants over seeds.
    Ablate(AblateArgs),
    /// Write (and score, when test data exist) baseline forecasts.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding <Freq>-train.csv and <Freq>-test.csv.
    #[arg(long, env = "M4_DATA_ROOT")]
    data_root: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_freq)]
    freq: Frequency,
    #[command(flatten)]
    data: DataArgs,
    /// Schedule preset; file and flags override it.
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    /// JSON file with (partial) run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long, value_parser = parse_enum::<SkipMode>)]
    skip_mode: Option<SkipMode>,
    #[arg(long, value_parser = parse_enum::<Connector>)]
    connector: Option<Connector>,
    #[arg(long, value_parser = parse_enum::<PosEncoding>)]
    pos_encoding: Option<PosEncoding>,
    /// Number of seeds, counting up from --seed.
    #[arg(long)]
    seeds: Option<usize>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    batches_per_epoch: Option<usize>,
    #[arg(long)]
    micro_batch: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Keep this fraction of series (stratified by length).
    #[arg(long)]
    subsample: Option<f64>,
    /// Parallel jobs for seeds and arms.
    #[arg(long)]
    workers: Option<usize>,
    /// Run directory to create.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_parser = parse_freq)]
    freq: Option<Frequency>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, num_args = 1..)]
    checkpoints: Vec<PathBuf>,
    /// CSV files with rows `id,F1,...,FH`.
    #[arg(long, num_args = 1..)]
    forecasts: Vec<PathBuf>,
    /// Average all forecasts before scoring.
    #[arg(long, conflicts_with = "median_of")]
    ensemble: bool,
    /// Report the median score across sources.
    #[arg(long)]
    median_of: bool,
    #[arg(long)]
    subsample: Option<f64>,
    /// Also write the report(s) as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = parse_freq)]
    freq: Option<Frequency>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    study: Study,
    /// Model widths to sweep.
    #[arg(long, num_args = 1.., default_values_t = [32])]
    d_models: Vec<usize>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_parser = parse_freq)]
    freq: Frequency,
    #[command(flatten)]
    data: DataArgs,
    /// naive2, snaive or naive.
    #[arg(long, default_value = "naive2", value_parser = parse_baseline)]
    method: Baseline,
    #[arg(long)]
    out: PathBuf,
}

fn parse_freq(s: &str) -> Result<Frequency, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_baseline(s: &str) -> Result<Baseline, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

impl RunArgs {
    /// Profile, then config file, then flags.
    fn resolve(&self) -> pitf::Result<RunConfig> {
        let mut c = RunConfig::new(self.freq, self.data.data_root.clone(), self.profile);
        if let Some(path) = &self.config {
            c = c.merge_file(path)?;
            c.frequency = self.freq;
            c.data_root = self.data.data_root.clone();
        }
        let m = &mut c.model;
        set(&mut m.d_model, self.d_model);
        set(&mut m.n_layers, self.layers);
        set(&mut m.n_heads, self.heads);
        if self.d_ff.is_some() {
            m.d_ff = self.d_ff;
        }
        set(&mut m.skip_mode, self.skip_mode);
        set(&mut m.connector, self.connector);
        set(&mut m.pos_encoding, self.pos_encoding);
        let t = &mut c.train;
        set(&mut t.max_epochs, self.max_epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.batches_per_epoch, self.batches_per_epoch);
        set(&mut t.micro_batch, self.micro_batch);
        set(&mut t.patience, self.patience);
        set(&mut t.lamb.lr, self.lr);
        if self.seeds.is_some() || self.seed.is_some() {
            let first = self.seed.unwrap_or(0);
            let count = self.seeds.unwrap_or(1) as u64;
            c.seeds = (first..first + count).collect();
        }
        if self.subsample.is_some() {
            c.subsample = self.subsample;
        }
        set(&mut c.workers, self.workers);
        set(&mut c.out_dir, self.out.clone());
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn print_reports(evals: &[run::Evaluation]) {
    for e in evals {
        println!("{}\n{}\n", e.label, e.report);
    }
}

fn execute(command: Command) -> pitf::Result<()> {
    match command {
        Command::Train(args) => {
            let config = args.run.resolve()?;
            let summaries = run::cmd_train(&config, |line| eprintln!("{line}"))?;
            for s in &summaries {
                println!(
                    "seed {}: best epoch {} of {}, loss {:.4} -> {}",
                    s.seed,
                    s.best_epoch,
                    s.epochs_run,
                    s.best_loss,
                    s.checkpoint.display()
                );
            }
        }
        Command::Evaluate(args) => {
            let req = EvaluateRequest {
                frequency: args.freq,
                data_root: args.data.data_root,
                checkpoints: args.checkpoints,
                forecasts: args.forecasts,
                ensemble: args.ensemble,
                median_of: args.median_of,
                subsample: args.subsample,
            };
            let evals = run::cmd_evaluate(&req)?;
            print_reports(&evals);
            if let Some(path) = args.json {
                let text = serde_json::to_string_pretty(&evals)?;
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
        }
        Command::Forecast(args) => {
            let n = run::cmd_forecast(&args.checkpoint, &args.data.data_root, args.freq, &args.out)?;
            println!("wrote {n} forecasts to {}", args.out.display());
        }
        Command::Ablate(args) => {
            let base = args.run.resolve()?;
            let config = AblationConfig {
                study: args.study,
                d_models: args.d_models,
                skip_modes: vec![SkipMode::None, SkipMode::SkipOnly, SkipMode::SkipGate],
                connectors: vec![Connector::Rezero, Connector::PreLn, Connector::PostLn],
                pos_encodings: vec![PosEncoding::Rotary, PosEncoding::Sinusoidal],
                base,
            };
            let results = run::cmd_ablate(&config, |line| eprintln!("{line}"))?;
            print!("{}", run::ablation_table(&results));
        }
        Command::Baseline(args) => {
            let report = run::cmd_baseline(&args.data.data_root, args.freq, args.method, &args.out)?;
            println!("wrote baseline forecasts to {}", args.out.display());
            if let Some(r) = report {
                println!("{r}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
