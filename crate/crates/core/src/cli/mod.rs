//! Command-line front end.
//!
//! `nss [--config FILE] [--out DIR] [--seed N] [--set KEY=VALUE]... <command>`
//!
//! Every flag is shorthand for one dotted configuration key (see
//! [`config`]); `--set` reaches the rest. Each run writes
//! `<command>.manifest.toml` to the output directory: the resolved
//! configuration plus checksums of inputs and artifacts. Passing that file
//! back with `--config` repeats the run.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error
//! (including unreadable files and archives), 3 training failure. Errors
//! print a `reason: <tag>` line and a message on standard error.

mod commands;
pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, OUTPUT_DIR_ENV};
pub use plot::{band_levels, emit_plot_data, quantile_band, ForecastTable, PlotData, QuantileBand};

use crate::error::Error;

/// File name of the model archive written by `train` and `search`.
pub const MODEL_FILE: &str = "model.nss";

#[derive(Debug, Parser)]
#[command(
    name = "nss",
    version,
    about = "Quantile regression with composed spline quantile functions"
)]
struct Cli {
    /// TOML config file (or a manifest from an earlier run).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: $NSS_OUTPUT_DIR or .].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set train.lr=0.01`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset CSV.
    Synth(SynthArgs),
    /// Fit one composition plan.
    Train(TrainArgs),
    /// Train every candidate plan and keep the best.
    Search(SearchArgs),
    /// Point and pinball metrics of a trained model.
    Eval(EvalArgs),
    /// Empirical coverage per nominal level.
    Calibrate(CalibrateArgs),
    /// Dense quantile band over one feature.
    Quantiles(BandArgs),
    /// One-step or rollout forecasts for a series.
    Forecast(ForecastArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Search(_) => "search",
            Command::Eval(_) => "eval",
            Command::Calibrate(_) => "calibrate",
            Command::Quantiles(_) => "quantiles",
            Command::Forecast(_) => "forecast",
        }
    }
}

type Overrides = Vec<(String, toml::Value)>;

fn push<T: Into<toml::Value>>(o: &mut Overrides, key: &str, v: Option<T>) {
    if let Some(v) = v {
        o.push((key.to_string(), v.into()));
    }
}

fn push_path(o: &mut Overrides, key: &str, v: &Option<PathBuf>) {
    push(o, key, v.as_ref().map(|p| p.display().to_string()));
}

fn push_list<T: Clone + Into<toml::Value>>(o: &mut Overrides, key: &str, v: &Option<Vec<T>>) {
    if let Some(v) = v {
        o.push((
            key.to_string(),
            toml::Value::Array(v.iter().cloned().map(Into::into).collect()),
        ));
    }
}

fn push_flag(o: &mut Overrides, key: &str, v: bool) {
    if v {
        o.push((key.to_string(), true.into()));
    }
}

fn int(v: Option<usize>) -> Option<i64> {
    v.map(|v| v as i64)
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// regression | bimodal | uniform | seasonal
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    datetime: Option<String>,
    /// Treat the input as a series and build lagged features.
    #[arg(long)]
    series: bool,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    split: Option<Vec<f64>>,
    #[arg(long)]
    chronological: bool,
}

impl DataArgs {
    fn apply(&self, o: &mut Overrides) {
        push_path(o, "data.path", &self.data);
        push(o, "data.target", self.target.clone());
        push(o, "data.datetime", self.datetime.clone());
        if self.series {
            o.push(("data.kind".into(), "series".into()));
        }
        push_list(o, "data.split", &self.split);
        push_flag(o, "data.chronological", self.chronological);
    }
}

#[derive(Debug, Args)]
struct SeriesArgs {
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

impl SeriesArgs {
    fn apply(&self, o: &mut Overrides) {
        push(o, "series.lag", int(self.lag));
        push_list(o, "series.covariates", &self.covariates);
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Preset (c-spline, p-spline, gaussian, nss-sum, nss-alpha-chain,
    /// nss-x-chain) or mode:kinds[:lambda].
    #[arg(long)]
    plan: Option<String>,
    #[arg(long)]
    knots: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<i64>>,
    #[arg(long)]
    activation: Option<String>,
}

impl ModelArgs {
    fn apply(&self, o: &mut Overrides) {
        push(o, "model.plan", self.plan.clone());
        push(o, "model.knots", int(self.knots));
        push(o, "model.lambda", self.lambda);
        push_list(o, "model.hidden", &self.hidden);
        push(o, "model.activation", self.activation.clone());
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Levels per loss evaluation.
    #[arg(long)]
    m: Option<usize>,
    /// midpoint | stratified | inclusive
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    patience: Option<usize>,
}

impl FitArgs {
    fn apply(&self, o: &mut Overrides) {
        push(o, "train.epochs", int(self.epochs));
        push(o, "train.lr", self.lr);
        push(o, "train.batch", int(self.batch));
        push(o, "train.m", int(self.m));
        push(o, "train.grid", self.grid.clone());
        push(o, "train.patience", int(self.patience));
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Semicolon-separated plans; an empty string is an empty list.
    #[arg(long, allow_hyphen_values = true)]
    candidates: Option<String>,
    /// Accept the first candidate with validation CRPS at most this.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Train candidates one at a time.
    #[arg(long)]
    serial: bool,
}

#[derive(Debug, Args)]
struct ArchiveArg {
    /// Model archive [default: <out>/model.nss].
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    archive: ArchiveArg,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// train | val | test | all
    #[arg(long = "eval-split")]
    eval_split: Option<String>,
    /// Report in standardized units.
    #[arg(long)]
    normalized: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    archive: ArchiveArg,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    series: SeriesArgs,
    /// Feature values whose conditional law is sampled (synthetic regression).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    /// Draws per slice.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct BandArgs {
    #[command(flatten)]
    archive: ArchiveArg,
    #[arg(long)]
    feature: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    x_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Number of equally spaced interior levels.
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[command(flatten)]
    archive: ArchiveArg,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    series: SeriesArgs,
    /// Index of the first forecast step [default: first test row].
    #[arg(long)]
    start: Option<usize>,
    /// Steps of autoregressive rollout; 1 gives one-step forecasts.
    #[arg(long)]
    rollout: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
}

impl Command {
    fn overrides(&self, o: &mut Overrides) {
        match self {
            Command::Synth(a) => {
                push(o, "synth.kind", a.kind.clone());
                push(o, "synth.n", int(a.n));
            }
            Command::Train(a) => {
                a.data.apply(o);
                a.series.apply(o);
                a.model.apply(o);
                a.fit.apply(o);
            }
            Command::Search(a) => {
                a.data.apply(o);
                a.series.apply(o);
                a.model.apply(o);
                a.fit.apply(o);
                if let Some(c) = &a.candidates {
                    let list: Vec<toml::Value> = c
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.to_string().into())
                        .collect();
                    o.push(("search.candidates".into(), toml::Value::Array(list)));
                }
                push(o, "search.delta", a.delta);
                push(o, "search.max_depth", int(a.max_depth));
                if a.serial {
                    o.push(("search.parallel".into(), false.into()));
                }
            }
            Command::Eval(a) => {
                push_path(o, "model.archive", &a.archive.model);
                a.data.apply(o);
                a.series.apply(o);
                push_list(o, "eval.levels", &a.levels);
                push(o, "eval.split", a.eval_split.clone());
                push_flag(o, "eval.normalized_units", a.normalized);
            }
            Command::Calibrate(a) => {
                push_path(o, "model.archive", &a.archive.model);
                a.data.apply(o);
                a.series.apply(o);
                push_list(o, "calibrate.x", &a.x);
                push(o, "calibrate.n", int(a.n));
                push_list(o, "calibrate.levels", &a.levels);
            }
            Command::Quantiles(a) => {
                push_path(o, "model.archive", &a.archive.model);
                push(o, "quantiles.feature", int(a.feature));
                push(o, "quantiles.x_min", a.x_min);
                push(o, "quantiles.x_max", a.x_max);
                push(o, "quantiles.points", int(a.points));
                push(o, "quantiles.levels", int(a.levels));
            }
            Command::Forecast(a) => {
                push_path(o, "model.archive", &a.archive.model);
                a.data.apply(o);
                a.series.apply(o);
                push(o, "forecast.start", int(a.start));
                push(o, "series.rollout", int(a.rollout));
                push_list(o, "forecast.levels", &a.levels);
            }
        }
    }
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Contract(_) => 1,
        Error::Data(_) | Error::Io { .. } | Error::Archive(_) | Error::ArchiveVersion { .. } => 2,
        Error::Training(_) | Error::SearchFailed { .. } | Error::DegenerateRange { .. } | Error::Invariant(_) => 3,
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("reason: {}", e.reason());
    eprintln!("error: {e}");
    exit_code(e)
}

fn resolve(cli: &Cli) -> crate::Result<RunConfig> {
    let mut o: Overrides = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        o.push((k.trim().to_string(), config::parse_value(v.trim())));
    }
    cli.command.overrides(&mut o);
    push_path(&mut o, "output_dir", &cli.out);
    push(&mut o, "seed", cli.seed.map(|s| s as i64));
    let env = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    RunConfig::resolve(cli.config.as_deref(), env, &o)
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("reason: usage");
            eprint!("{e}");
            return 1;
        }
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    match commands::dispatch(cli.command.name(), &cfg) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Data("x".into())), 2);
        assert_eq!(exit_code(&Error::Training("x".into())), 3);
        assert_eq!(exit_code(&Error::SearchFailed { diagnostics: vec![] }), 3);
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(["nss", "train", "--no-such-flag"]), 1);
    }

    #[test]
    fn flags_become_config_keys() {
        let cli = Cli::try_parse_from([
            "nss", "--seed", "4", "train", "--lr", "0.1", "--plan", "c-spline", "--out", "o",
        ])
        .unwrap();
        let cfg = resolve(&cli).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.train.lr, 0.1);
        assert_eq!(cfg.model.plan, "c-spline");
        assert_eq!(cfg.output_dir, Some(PathBuf::from("o")));
    }
}
