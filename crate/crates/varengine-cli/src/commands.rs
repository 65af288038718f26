//! Subcommand implementations. Every flag can also be given in the
//! `--config` key=value file (same name, '-' and '_' interchangeable);
//! explicit flags win.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::Args;
use varengine::backtest::{
    resample_experiment, run_backtest, Estimator, EstimatorId, ExperimentConfig,
};
use varengine::classical::AlphaLevel;
use varengine::core::{derive_seed, make_windows, ReturnSeries, SplitPlan, WindowPlan};
use varengine::garch::{GarchSpec, NoiseFamily};
use varengine::lstm::{load_model, save_model, train, LstmParams, TrainConfig, TrainReport};

use crate::config::{merge, FileConfig};
use crate::data::{resolve_data, write_simulation_csv, DataSourceArgs, ResolvedData};
use crate::report::{BacktestDocument, EstimatorEntry, ExperimentDocument, TrainDocument};
use crate::{CliError, CliResult};

// Seed streams derived from the master seed, so that simulation,
// training and experiment resampling never share randomness.
const STREAM_SIMULATE: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_EXPERIMENT: u64 = 2;

/// Flags shared by every command that needs a return series.
#[derive(Args, Debug)]
pub struct SourceArgs {
    /// Named GARCH preset to simulate from (garch11n ... garch41t)
    #[arg(long)]
    preset: Option<String>,
    /// Number of observations to simulate
    #[arg(long)]
    length: Option<usize>,
    /// Simulation steps discarded before the kept sample
    #[arg(long)]
    burn_in: Option<usize>,
    /// CSV file to ingest instead of simulating
    #[arg(long)]
    data: Option<PathBuf>,
    /// Name of the value column inside --data
    #[arg(long)]
    column: Option<String>,
    /// Divide ingested values by 100 (default: true for CSV data)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    percent: Option<bool>,
}

impl SourceArgs {
    const KEYS: [&'static str; 6] = ["preset", "length", "burn_in", "data", "column", "percent"];

    fn resolve(self, file: &FileConfig, sim_seed: u64) -> CliResult<ResolvedData> {
        resolve_data(DataSourceArgs {
            preset: merge(self.preset, file, "preset")?,
            length: merge(self.length, file, "length")?,
            burn_in: merge(self.burn_in, file, "burn_in")?,
            sim_seed,
            data: merge(self.data, file, "data")?,
            column: merge(self.column, file, "column")?,
            percent: merge(self.percent, file, "percent")?,
        })
    }
}

fn known_keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

/// Fills a partially specified (alpha, n) pair from the two default
/// regimes (0.01, 250) and (0.05, 50); any other one-sided value must
/// be completed explicitly.
fn resolve_regime(alpha: Option<f64>, n: Option<usize>) -> CliResult<(AlphaLevel, usize)> {
    let (a, n) = match (alpha, n) {
        (None, None) => (0.01, 250),
        (Some(a), Some(n)) => (a, n),
        (Some(a), None) if a == 0.01 => (a, 250),
        (Some(a), None) if a == 0.05 => (a, 50),
        (Some(a), None) => {
            return Err(CliError::Usage(format!(
                "no default window length for alpha {a}; pass --n \
                 (defaults: alpha 0.01 -> n 250, alpha 0.05 -> n 50)"
            )));
        }
        (None, Some(250)) => (0.01, 250),
        (None, Some(50)) => (0.05, 50),
        (None, Some(n)) => {
            return Err(CliError::Usage(format!(
                "no default alpha for window length {n}; pass --alpha \
                 (defaults: n 250 -> alpha 0.01, n 50 -> alpha 0.05)"
            )));
        }
    };
    if n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let alpha = AlphaLevel::new(a).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((alpha, n))
}

fn parse_split(text: Option<String>) -> CliResult<SplitPlan> {
    let Some(text) = text else {
        return Ok(SplitPlan::default());
    };
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "--split needs three comma-separated fractions, got '{text}'"
        )));
    }
    let mut f = [0.0f64; 3];
    for (slot, part) in f.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|_| {
            CliError::Usage(format!("--split: '{part}' is not a number"))
        })?;
    }
    SplitPlan::new(f[0], f[1], f[2]).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_estimators(text: &str) -> CliResult<Vec<EstimatorId>> {
    let ids: Vec<EstimatorId> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(EstimatorId::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if ids.is_empty() {
        return Err(CliError::Usage("--estimators lists no estimator ids".into()));
    }
    Ok(ids)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Domain(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

type WindowSet<'a> = Vec<(&'a [f64], f64)>;

/// Rolling training and validation window sets: training windows lie
/// inside [0, t1); validation windows may reach back into the training
/// segment but their targets lie in [t1, t2).
fn training_sets(
    series: &ReturnSeries,
    n: usize,
    t1: usize,
    t2: usize,
) -> CliResult<(WindowSet<'_>, WindowSet<'_>)> {
    if t1 <= n {
        return Err(CliError::Usage(format!(
            "training segment of {t1} observations cannot hold windows of length {n}"
        )));
    }
    if t2 <= t1 {
        return Err(CliError::Usage("the validation segment is empty".into()));
    }
    let train_plan = WindowPlan::new(n, t1 - n, 0)?;
    let val_plan = WindowPlan::new(n, t2 - t1, t1 - n)?;
    Ok((make_windows(series, &train_plan)?, make_windows(series, &val_plan)?))
}

/// Shared training flags; None fields fall back to TrainConfig defaults.
#[derive(Args, Debug)]
pub struct TrainFlags {
    /// Maximum training epochs per calibration run
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial Adam learning rate
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Independent calibration runs to select from
    #[arg(long)]
    runs: Option<usize>,
}

impl TrainFlags {
    const KEYS: [&'static str; 4] = ["epochs", "batch_size", "learning_rate", "runs"];

    fn build(self, file: &FileConfig, seed: u64) -> CliResult<TrainConfig> {
        let defaults = TrainConfig::default();
        Ok(TrainConfig {
            epochs_max: merge(self.epochs, file, "epochs")?.unwrap_or(defaults.epochs_max),
            batch_size: merge(self.batch_size, file, "batch_size")?
                .unwrap_or(defaults.batch_size),
            learning_rate: merge(self.learning_rate, file, "learning_rate")?
                .unwrap_or(defaults.learning_rate),
            calibration_runs: merge(self.runs, file, "runs")?
                .unwrap_or(defaults.calibration_runs),
            seed,
            ..defaults
        })
    }
}

fn train_network(
    series: &ReturnSeries,
    n: usize,
    t1: usize,
    t2: usize,
    alpha: AlphaLevel,
    config: &TrainConfig,
) -> CliResult<(LstmParams, TrainReport)> {
    let (train_set, val_set) = training_sets(series, n, t1, t2)?;
    Ok(train(&train_set, &val_set, alpha, config)?)
}

// ---------------------------------------------------------------- simulate

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Named GARCH preset (garch11n ... garch41t)
    #[arg(long)]
    preset: Option<String>,
    /// Number of observations to keep
    #[arg(long)]
    length: Option<usize>,
    /// Steps discarded before the kept sample
    #[arg(long)]
    burn_in: Option<usize>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file supplying defaults for any flag
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let keys = ["preset", "length", "burn_in", "seed", "out"];
    let file = FileConfig::load(args.config.as_deref(), &keys)?;
    let preset = merge(args.preset, &file, "preset")?
        .ok_or_else(|| CliError::Usage("simulate needs --preset <name>".into()))?;
    let length = merge(args.length, &file, "length")?.unwrap_or(7500);
    if length == 0 {
        return Err(CliError::Usage("--length must be positive".into()));
    }
    let burn_in = merge(args.burn_in, &file, "burn_in")?.unwrap_or(1000);
    let seed = merge(args.seed, &file, "seed")?.unwrap_or(0);
    let out = merge(args.out, &file, "out")?
        .ok_or_else(|| CliError::Usage("simulate needs --out <csv path>".into()))?;

    let spec = crate::data::lookup_preset(&preset)?;
    let (series, sigmas) = varengine::garch::simulate(&spec, length, burn_in, seed)?;
    write_simulation_csv(&out, &series, &sigmas)?;
    println!("wrote {} observations of {preset} to {}", series.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------- backtest

#[derive(Args, Debug)]
pub struct BacktestArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Tail probability (defaults jointly with --n: 0.01/250 or 0.05/50)
    #[arg(long)]
    alpha: Option<f64>,
    /// Estimation window length
    #[arg(long)]
    n: Option<usize>,
    /// Train/validation/test fractions, e.g. 0.8,0.1,0.1
    #[arg(long)]
    split: Option<String>,
    /// Which part of the series to backtest: test | full
    #[arg(long)]
    segment: Option<String>,
    /// Comma-separated estimator ids (true_var,emp,norm,u,garch_n,garch_t,lstm)
    #[arg(long)]
    estimators: Option<String>,
    /// GARCH lag order p for the garch estimators
    #[arg(long)]
    garch_p: Option<usize>,
    /// GARCH lag order q for the garch estimators
    #[arg(long)]
    garch_q: Option<usize>,
    /// Persisted network model to load for the lstm estimator
    #[arg(long)]
    model: Option<PathBuf>,
    /// Train the lstm estimator on the series' training segments
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    train: Option<bool>,
    #[command(flatten)]
    train_flags: TrainFlags,
    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional per-window CSV (index, estimator, target, risk, secured)
    #[arg(long)]
    series_out: Option<PathBuf>,
    /// key=value file supplying defaults for any flag
    #[arg(long)]
    config: Option<PathBuf>,
}

struct EstimatorContext<'a> {
    spec: Option<&'a GarchSpec>,
    garch_p: Option<usize>,
    garch_q: Option<usize>,
    lstm: Option<&'a LstmParams>,
}

impl EstimatorContext<'_> {
    fn garch_orders(&self) -> (usize, usize) {
        match (self.garch_p, self.garch_q, self.spec) {
            (p, q, Some(spec)) => (p.unwrap_or(spec.p()), q.unwrap_or(spec.q())),
            (p, q, None) => (p.unwrap_or(1), q.unwrap_or(1)),
        }
    }

    fn build(&self, id: EstimatorId) -> CliResult<Estimator> {
        let (p, q) = self.garch_orders();
        match id {
            EstimatorId::TrueVar => match self.spec {
                Some(spec) => Ok(Estimator::true_var_for(spec)),
                None => Err(CliError::Usage(
                    "the true_var estimator needs a simulated source (--preset); \
                     the volatility of CSV data is unknown"
                        .into(),
                )),
            },
            EstimatorId::Emp => Ok(Estimator::Empirical),
            EstimatorId::Norm => Ok(Estimator::GaussianPlugin),
            EstimatorId::U => Ok(Estimator::GaussianUnbiased),
            EstimatorId::GarchN => Ok(Estimator::GarchNormal { p, q }),
            EstimatorId::GarchT => Ok(Estimator::GarchT { p, q }),
            EstimatorId::Lstm => match self.lstm {
                Some(params) => Ok(Estimator::Lstm(Box::new(params.clone()))),
                None => Err(CliError::Usage(
                    "the lstm estimator needs --model <file> or --train".into(),
                )),
            },
        }
    }
}

fn write_series_csv(
    path: &Path,
    targets: &[f64],
    entries: &[EstimatorEntry],
) -> CliResult<()> {
    let file = File::create(path)
        .map_err(|e| CliError::Domain(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "index,estimator,target,risk,secured")?;
    for entry in entries {
        for (i, ((r, s), y)) in entry
            .risk_series
            .iter()
            .zip(&entry.secured_series)
            .zip(targets)
            .enumerate()
        {
            writeln!(out, "{i},{},{y},{r},{s}", entry.id)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_backtest(args: BacktestArgs) -> CliResult<()> {
    let started = Instant::now();
    let keys = known_keys(&[
        &SourceArgs::KEYS,
        &TrainFlags::KEYS,
        &[
            "alpha",
            "n",
            "split",
            "segment",
            "estimators",
            "garch_p",
            "garch_q",
            "model",
            "train",
            "seed",
            "out",
            "series_out",
        ],
    ]);
    let file = FileConfig::load(args.config.as_deref(), &keys)?;
    let seed = merge(args.seed, &file, "seed")?.unwrap_or(0);
    let out = merge(args.out, &file, "out")?
        .ok_or_else(|| CliError::Usage("backtest needs --out <report path>".into()))?;
    let series_out = merge(args.series_out, &file, "series_out")?;

    let resolved = args.source.resolve(&file, derive_seed(seed, STREAM_SIMULATE))?;
    let simulated = resolved.spec.is_some();
    let (alpha, n) =
        resolve_regime(merge(args.alpha, &file, "alpha")?, merge(args.n, &file, "n")?)?;
    let split = parse_split(merge(args.split, &file, "split")?)?;
    let segment = merge(args.segment, &file, "segment")?
        .unwrap_or_else(|| if simulated { "test".to_string() } else { "full".to_string() });

    let len = resolved.series.len();
    let (t1, t2) = split.boundaries(len);
    let plan = match segment.as_str() {
        "test" => {
            if t2 < n || len <= t2 {
                return Err(CliError::Usage(format!(
                    "test segment of a {len}-observation series (boundary {t2}) \
                     cannot host windows of length {n}"
                )));
            }
            WindowPlan::new(n, len - t2, t2 - n)?
        }
        "full" => {
            if len <= n {
                return Err(CliError::Usage(format!(
                    "series of {len} observations cannot host windows of length {n}"
                )));
            }
            WindowPlan::new(n, len - n, 0)?
        }
        other => {
            return Err(CliError::Usage(format!(
                "--segment must be 'test' or 'full', got '{other}'"
            )));
        }
    };

    let ids = parse_estimators(
        &merge(args.estimators, &file, "estimators")?.unwrap_or_else(|| "emp,u".to_string()),
    )?;

    let model_path = merge(args.model, &file, "model")?;
    let want_train = merge(args.train, &file, "train")?.unwrap_or(false);
    let lstm_params = if ids.contains(&EstimatorId::Lstm) {
        match (&model_path, want_train) {
            (Some(_), true) => {
                return Err(CliError::Usage(
                    "pass either --model or --train for the lstm estimator, not both".into(),
                ));
            }
            (Some(path), false) => Some(load_model(path)?),
            (None, true) => {
                let config =
                    args.train_flags.build(&file, derive_seed(seed, STREAM_TRAIN))?;
                let (params, _) = train_network(&resolved.series, n, t1, t2, alpha, &config)?;
                Some(params)
            }
            (None, false) => None,
        }
    } else {
        None
    };

    let context = EstimatorContext {
        spec: resolved.spec.as_ref(),
        garch_p: merge(args.garch_p, &file, "garch_p")?,
        garch_q: merge(args.garch_q, &file, "garch_q")?,
        lstm: lstm_params.as_ref(),
    };

    let targets: Vec<f64> =
        make_windows(&resolved.series, &plan)?.iter().map(|(_, y)| *y).collect();
    let mut entries = Vec::with_capacity(ids.len());
    for id in &ids {
        let estimator = context.build(*id)?;
        let clock = Instant::now();
        let report = run_backtest(
            &resolved.series,
            &plan,
            &estimator,
            alpha,
            resolved.sigmas.as_deref(),
        )?;
        entries.push(EstimatorEntry::from_report(&report, clock.elapsed().as_secs_f64()));
    }

    let document = BacktestDocument {
        alpha: alpha.value(),
        n,
        m: plan.m,
        segment,
        data: resolved.descriptor,
        seed,
        runtime_s: started.elapsed().as_secs_f64(),
        targets,
        estimators: entries,
    };
    write_json(&out, &document)?;
    if let Some(path) = &series_out {
        write_series_csv(path, &document.targets, &document.estimators)?;
    }
    for e in &document.estimators {
        println!(
            "{:<10} exceeds {:>4}  ER {:>8.4}%  score*1e4 {:>12.6}  subs {}",
            e.id.as_str(),
            e.exceeds,
            e.er_percent,
            e.mean_score_x10000,
            e.substitutions
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

// -------------------------------------------------------------- experiment

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Named GARCH preset the experiment resamples from
    #[arg(long)]
    preset: Option<String>,
    /// Total sample length the split is applied to
    #[arg(long)]
    k: Option<usize>,
    /// Simulation steps discarded before the kept sample
    #[arg(long)]
    burn_in: Option<usize>,
    /// Tail probability (defaults jointly with --n: 0.01/250 or 0.05/50)
    #[arg(long)]
    alpha: Option<f64>,
    /// Estimation window length
    #[arg(long)]
    n: Option<usize>,
    /// Train/validation/test fractions, e.g. 0.8,0.1,0.1
    #[arg(long)]
    split: Option<String>,
    /// Comma-separated estimator ids; default covers the full roster
    #[arg(long)]
    estimators: Option<String>,
    /// GARCH lag order p for the garch estimators
    #[arg(long)]
    garch_p: Option<usize>,
    /// GARCH lag order q for the garch estimators
    #[arg(long)]
    garch_q: Option<usize>,
    /// Persisted network model to load instead of training
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    train_flags: TrainFlags,
    /// Number of independent test-segment continuations
    #[arg(long)]
    repetitions: Option<usize>,
    /// Length of each continuation (default: k minus the history span)
    #[arg(long)]
    test_length: Option<usize>,
    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON path
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file supplying defaults for any flag
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn cmd_experiment(args: ExperimentArgs) -> CliResult<()> {
    let started = Instant::now();
    let keys = known_keys(&[
        &TrainFlags::KEYS,
        &[
            "preset",
            "k",
            "burn_in",
            "alpha",
            "n",
            "split",
            "estimators",
            "garch_p",
            "garch_q",
            "model",
            "repetitions",
            "test_length",
            "seed",
            "out",
        ],
    ]);
    let file = FileConfig::load(args.config.as_deref(), &keys)?;
    let preset = merge(args.preset, &file, "preset")?
        .ok_or_else(|| CliError::Usage("experiment needs --preset <name>".into()))?;
    let spec = crate::data::lookup_preset(&preset)?;
    let k = merge(args.k, &file, "k")?.unwrap_or(7500);
    let burn_in = merge(args.burn_in, &file, "burn_in")?.unwrap_or(1000);
    let (alpha, n) =
        resolve_regime(merge(args.alpha, &file, "alpha")?, merge(args.n, &file, "n")?)?;
    let split = parse_split(merge(args.split, &file, "split")?)?;
    let seed = merge(args.seed, &file, "seed")?.unwrap_or(0);
    let out = merge(args.out, &file, "out")?
        .ok_or_else(|| CliError::Usage("experiment needs --out <report path>".into()))?;

    let (t1, t2) = split.boundaries(k);
    let repetitions = merge(args.repetitions, &file, "repetitions")?.unwrap_or(10);
    let test_length = merge(args.test_length, &file, "test_length")?.unwrap_or(k - t2);

    let default_roster = {
        let garch = match spec.noise() {
            NoiseFamily::Normal => "garch_n",
            NoiseFamily::StudentT => "garch_t",
        };
        format!("true_var,emp,u,{garch},lstm")
    };
    let ids = parse_estimators(
        &merge(args.estimators, &file, "estimators")?.unwrap_or(default_roster),
    )?;

    let (history, _sigmas) =
        varengine::garch::simulate(&spec, t2, burn_in, derive_seed(seed, STREAM_SIMULATE))?;

    let model_path: Option<PathBuf> = merge(args.model, &file, "model")?;
    let lstm_params = if ids.contains(&EstimatorId::Lstm) {
        match &model_path {
            Some(path) => Some(load_model(path)?),
            None => {
                let config =
                    args.train_flags.build(&file, derive_seed(seed, STREAM_TRAIN))?;
                let (params, _) = train_network(&history, n, t1, t2, alpha, &config)?;
                Some(params)
            }
        }
    } else {
        None
    };

    let context = EstimatorContext {
        spec: Some(&spec),
        garch_p: merge(args.garch_p, &file, "garch_p")?,
        garch_q: merge(args.garch_q, &file, "garch_q")?,
        lstm: lstm_params.as_ref(),
    };
    let estimators: Vec<Estimator> =
        ids.iter().map(|id| context.build(*id)).collect::<CliResult<_>>()?;

    let config = ExperimentConfig {
        n,
        alpha,
        repetitions,
        test_length,
        seed: derive_seed(seed, STREAM_EXPERIMENT),
    };
    let report = resample_experiment(&spec, &history, &estimators, &config)?;
    let document = ExperimentDocument::from_report(
        preset,
        k,
        seed,
        ids,
        &report,
        started.elapsed().as_secs_f64(),
    );
    write_json(&out, &document)?;
    print!("{}", document.summary_table());
    println!("wrote {}", out.display());
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Tail probability (defaults jointly with --n: 0.01/250 or 0.05/50)
    #[arg(long)]
    alpha: Option<f64>,
    /// Estimation window length
    #[arg(long)]
    n: Option<usize>,
    /// Train/validation/test fractions, e.g. 0.8,0.1,0.1
    #[arg(long)]
    split: Option<String>,
    #[command(flatten)]
    train_flags: TrainFlags,
    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Where to persist the trained model
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Optional JSON training report path
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// key=value file supplying defaults for any flag
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let started = Instant::now();
    let keys = known_keys(&[
        &SourceArgs::KEYS,
        &TrainFlags::KEYS,
        &["alpha", "n", "split", "seed", "model_out", "report_out"],
    ]);
    let file = FileConfig::load(args.config.as_deref(), &keys)?;
    let seed = merge(args.seed, &file, "seed")?.unwrap_or(0);
    let model_out = merge(args.model_out, &file, "model_out")?
        .ok_or_else(|| CliError::Usage("train needs --model-out <path>".into()))?;
    let report_out = merge(args.report_out, &file, "report_out")?;

    let resolved = args.source.resolve(&file, derive_seed(seed, STREAM_SIMULATE))?;
    let (alpha, n) =
        resolve_regime(merge(args.alpha, &file, "alpha")?, merge(args.n, &file, "n")?)?;
    let split = parse_split(merge(args.split, &file, "split")?)?;
    let (t1, t2) = split.boundaries(resolved.series.len());

    let config = args.train_flags.build(&file, derive_seed(seed, STREAM_TRAIN))?;
    let (params, report) = train_network(&resolved.series, n, t1, t2, alpha, &config)?;
    save_model(&model_out, &params)?;

    let meta = params.meta.as_ref().expect("training attaches metadata");
    println!(
        "selected run {} of {}: train score {:.6e}, validation score {:.6e}",
        report.selected_run + 1,
        report.runs.len(),
        meta.train_score,
        meta.val_score
    );
    println!("wrote model to {}", model_out.display());

    if let Some(path) = &report_out {
        let document = TrainDocument {
            alpha: alpha.value(),
            n,
            k: resolved.series.len(),
            split: [split.train, split.validation, split.test],
            seed,
            data: resolved.descriptor,
            model_path: model_out.display().to_string(),
            runtime_s: started.elapsed().as_secs_f64(),
            report,
        };
        write_json(path, &document)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------- plotdata

#[derive(Args, Debug)]
pub struct PlotdataArgs {
    /// Backtest report JSON to convert
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output CSV path (index, estimator, target, neg_risk)
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file supplying defaults for any flag
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn cmd_plotdata(args: PlotdataArgs) -> CliResult<()> {
    let keys = ["report", "out"];
    let file = FileConfig::load(args.config.as_deref(), &keys)?;
    let report_path = merge(args.report, &file, "report")?
        .ok_or_else(|| CliError::Usage("plotdata needs --report <backtest json>".into()))?;
    let out = merge(args.out, &file, "out")?
        .ok_or_else(|| CliError::Usage("plotdata needs --out <csv path>".into()))?;

    let text = std::fs::read_to_string(&report_path)
        .map_err(|e| CliError::Domain(format!("cannot read {}: {e}", report_path.display())))?;
    let document: BacktestDocument = serde_json::from_str(&text)
        .map_err(|e| {
            CliError::Domain(format!("{}: not a backtest report: {e}", report_path.display()))
        })?;

    let handle = File::create(&out)
        .map_err(|e| CliError::Domain(format!("cannot create {}: {e}", out.display())))?;
    let mut w = BufWriter::new(handle);
    writeln!(w, "index,estimator,target,neg_risk")?;
    for entry in &document.estimators {
        for (i, (r, y)) in entry.risk_series.iter().zip(&document.targets).enumerate() {
            writeln!(w, "{i},{},{y},{}", entry.id, -r)?;
        }
    }
    w.flush()?;
    println!(
        "wrote {} rows ({} estimators x {} windows) to {}",
        document.estimators.len() * document.m,
        document.estimators.len(),
        document.m,
        out.display()
    );
    Ok(())
}
