use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::composition::{search, QuantileModel, SearchConfig};
use crate::data::synth::{ar_seasonal, bimodal_mixture, synth_regression, synth_slice, uniform_featureless};
use crate::data::{
    lagged_dataset, load_csv, load_model, load_series_csv, one_step, rollout, save_model, split_dataset, split_sizes,
    CsvOptions, Dataset, Fingerprint, Splits,
};
use crate::error::{Error, Result};
use crate::evaluation::{calibration_curve, evaluate_model, CalibrationCurve};
use crate::neural::Matrix;
use crate::training::fit;

use super::config::{DataKind, ManifestInfo, RunConfig, SplitChoice, SynthKind};
use super::plot::{band_levels, emit_plot_data, quantile_band, ForecastTable, PlotData};
use super::MODEL_FILE;

/// Collects artifacts and writes the manifest at the end of a run.
struct Run<'a> {
    cfg: &'a RunConfig,
    command: &'static str,
    dir: PathBuf,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
}

fn sha_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig, command: &'static str) -> Result<Self> {
        let dir = cfg.output_dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            cfg,
            command,
            dir,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha_file(path)?);
        Ok(())
    }

    fn emit(&mut self, name: &str, payload: PlotData<'_>) -> Result<()> {
        let hash = emit_plot_data(&payload, self.dir.join(name))?;
        println!("wrote {}", self.dir.join(name).display());
        self.artifacts.insert(name.to_string(), hash);
        Ok(())
    }

    fn save(&mut self, model: &QuantileModel) -> Result<()> {
        let path = self.dir.join(MODEL_FILE);
        let fp = Fingerprint {
            config_hash: self.cfg.hash()?,
            seed: self.cfg.seed,
        };
        save_model(model, &fp, &path)?;
        println!("wrote {}", path.display());
        self.artifacts.insert(MODEL_FILE.to_string(), sha_file(&path)?);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let cfg = RunConfig {
            manifest: Some(ManifestInfo {
                command: self.command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: self.cfg.hash()?,
                inputs: self.inputs,
                artifacts: self.artifacts,
            }),
            ..self.cfg.clone()
        };
        let path = self.dir.join(format!("{}.manifest.toml", self.command));
        let text = format!(
            "# nss {} run manifest; reusable with --config\n{}",
            self.command,
            cfg.to_toml()?
        );
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub(super) fn dispatch(command: &'static str, cfg: &RunConfig) -> Result<()> {
    match command {
        "synth" => synth(cfg),
        "train" => train(cfg),
        "search" => run_search(cfg),
        "eval" => eval(cfg),
        "calibrate" => calibrate(cfg),
        "quantiles" => quantiles(cfg),
        "forecast" => forecast(cfg),
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    }
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let s = &cfg.synth;
    if s.n == 0 {
        return Err(Error::Config("synth.n must be >= 1".into()));
    }
    let data = match s.kind {
        SynthKind::Regression => synth_regression(s.n, cfg.seed)?,
        SynthKind::Bimodal => bimodal_mixture(s.n, cfg.seed)?,
        SynthKind::Uniform => uniform_featureless(s.n, cfg.seed)?,
        SynthKind::Seasonal => {
            let series = ar_seasonal(s.n, s.phi, s.period, s.amp, s.sigma, cfg.seed)?;
            let rows: Vec<Vec<f64>> = series
                .covariates
                .iter()
                .enumerate()
                .map(|(t, c)| std::iter::once(t as f64).chain(c.iter().copied()).collect())
                .collect();
            let mut columns = vec!["t".to_string()];
            columns.extend(series.covariate_names.iter().cloned());
            Dataset::new(Matrix::from_rows(&rows), series.values, columns, "y")?
        }
    };
    let mut run = Run::new(cfg, "synth")?;
    run.emit("synth.csv", PlotData::Dataset(&data))?;
    run.finish()
}

fn load_rows(cfg: &RunConfig, run: &mut Run<'_>) -> Result<Dataset> {
    let path = cfg.require_data()?;
    run.input(path)?;
    match cfg.data.kind {
        DataKind::Table => load_csv(
            path,
            &cfg.data.target,
            &CsvOptions {
                datetime: cfg.data.datetime.clone(),
                features: cfg.data.features.clone(),
                skip_invalid_rows: cfg.data.skip_invalid_rows,
            },
        ),
        DataKind::Series => {
            let (y, cov) = load_series_csv(
                path,
                &cfg.data.target,
                &cfg.series.covariates,
                cfg.data.datetime.as_deref(),
            )?;
            lagged_dataset(&y, &cov, &cfg.series)
        }
    }
}

/// Raw (unstandardized) splits as configured; series are split in time order.
fn raw_splits(cfg: &RunConfig, run: &mut Run<'_>) -> Result<Splits> {
    let data = load_rows(cfg, run)?;
    let chronological = cfg.data.chronological || cfg.data.kind == DataKind::Series;
    split_dataset(&data, cfg.data.split, cfg.seed, chronological)
}

fn pick(splits: &Splits, choice: SplitChoice) -> Result<Dataset> {
    Ok(match choice {
        SplitChoice::Train => splits.train.clone(),
        SplitChoice::Val => splits.val.clone(),
        SplitChoice::Test => splits.test.clone(),
        SplitChoice::All => {
            let mut rows = Vec::new();
            let mut ys = Vec::new();
            for d in [&splits.train, &splits.val, &splits.test] {
                rows.extend((0..d.n()).map(|i| d.row(i).to_vec()));
                ys.extend_from_slice(&d.targets);
            }
            Dataset::new(
                Matrix::from_rows(&rows),
                ys,
                splits.train.columns.clone(),
                splits.train.target_name.clone(),
            )?
        }
    })
}

fn check_width(model: &QuantileModel, data: &Dataset) -> Result<()> {
    if model.input_dim() != data.d() {
        return Err(Error::Data(format!(
            "model expects {} features, data has {}",
            model.input_dim(),
            data.d()
        )));
    }
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::new(cfg, "train")?;
    let (splits, stats) = raw_splits(cfg, &mut run)?.normalized()?;
    let model = QuantileModel::new(cfg.model.plan()?, stats, &cfg.model.network(), cfg.seed)?;
    let start = Instant::now();
    let report = fit(model, &splits.train, Some(&splits.val), &cfg.train.config(cfg.seed))?;
    run.emit("train_report.csv", PlotData::TrainReport(&report))?;
    let report = report.into_result()?;
    eprintln!(
        "{}: {} epochs in {:.1}s, best validation CRPS {}",
        report.model.plan,
        report.epochs(),
        start.elapsed().as_secs_f64(),
        report.best_val().map_or("n/a".into(), |v| format!("{v:.6}"))
    );
    run.save(&report.model)?;
    run.finish()
}

fn run_search(cfg: &RunConfig) -> Result<()> {
    let space = cfg.search.space(&cfg.model)?;
    let mut run = Run::new(cfg, "search")?;
    let (splits, _) = raw_splits(cfg, &mut run)?.normalized()?;
    let sc = SearchConfig {
        space,
        delta: cfg.search.delta,
        train: cfg.train.config(cfg.seed),
        network: cfg.model.network(),
        seed: cfg.seed,
        max_depth: cfg.search.max_depth,
        parallel: cfg.search.parallel,
    };
    let out = search(&sc, &splits.train, &splits.val)?;
    run.emit("leaderboard.csv", PlotData::Leaderboard(&out.leaderboard))?;
    let best = out.best_entry();
    eprintln!(
        "best {} with validation CRPS {} ({} candidates{})",
        best.plan,
        best.val_crps.map_or("n/a".into(), |v| format!("{v:.6}")),
        out.leaderboard.len(),
        if out.early_exit { ", early exit" } else { "" }
    );
    run.save(&out.best)?;
    run.finish()
}

fn load_archive(cfg: &RunConfig, run: &mut Run<'_>) -> Result<QuantileModel> {
    let path = cfg.require_archive()?;
    run.input(&path)?;
    Ok(load_model(&path)?.0)
}

fn eval(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::new(cfg, "eval")?;
    let model = load_archive(cfg, &mut run)?;
    let data = pick(&raw_splits(cfg, &mut run)?, cfg.eval.split)?;
    check_width(&model, &data)?;
    let report = evaluate_model(&model, &data, &cfg.eval.levels, cfg.eval.normalized_units)?;
    eprintln!(
        "{} rows: MAE {:.6}, avg pinball (99 levels) {:.6}",
        report.n, report.point.mae, report.avg_pinball_99
    );
    run.emit("metrics.csv", PlotData::Metrics(&report))?;
    run.finish()
}

fn calibrate(cfg: &RunConfig) -> Result<()> {
    let c = &cfg.calibrate;
    let mut run = Run::new(cfg, "calibrate")?;
    let model = load_archive(cfg, &mut run)?;
    let curves: Vec<CalibrationCurve> = if c.x.is_empty() {
        let data = pick(&raw_splits(cfg, &mut run)?, c.split)?;
        check_width(&model, &data)?;
        vec![calibration_curve(
            &model,
            &data.features,
            &data.targets,
            &c.levels,
            c.split.name(),
        )?]
    } else {
        if cfg.synth.kind != SynthKind::Regression {
            return Err(Error::Config(
                "x-slices sample the synthetic regression law; set synth.kind = \"regression\" or drop calibrate.x"
                    .into(),
            ));
        }
        if model.input_dim() != 1 {
            return Err(Error::Data(format!(
                "x-slices need a one-feature model, this one has {}",
                model.input_dim()
            )));
        }
        if c.n == 0 {
            return Err(Error::Config("calibrate.n must be >= 1".into()));
        }
        c.x.iter()
            .enumerate()
            .map(|(i, &x)| {
                let slice = synth_slice(x, c.n, cfg.seed.wrapping_add(1 + i as u64))?;
                calibration_curve(&model, &slice.features, &slice.targets, &c.levels, format!("x={x}"))
            })
            .collect::<Result<_>>()?
    };
    for curve in &curves {
        eprintln!("{}: max |coverage - level| = {:.4}", curve.slice, curve.max_deviation());
    }
    run.emit("calibration.csv", PlotData::Calibration(&curves))?;
    run.finish()
}

fn quantiles(cfg: &RunConfig) -> Result<()> {
    let b = &cfg.quantiles;
    let mut run = Run::new(cfg, "quantiles")?;
    let model = load_archive(cfg, &mut run)?;
    let band = quantile_band(&model, b.feature, b.x_min, b.x_max, b.points, &band_levels(b.levels))?;
    run.emit("quantiles.csv", PlotData::Band(&band))?;
    run.finish()
}

fn forecast(cfg: &RunConfig) -> Result<()> {
    let spec = &cfg.series;
    let mut run = Run::new(cfg, "forecast")?;
    let model = load_archive(cfg, &mut run)?;
    let path = cfg.require_data()?;
    run.input(path)?;
    let (y, cov) = load_series_csv(path, &cfg.data.target, &spec.covariates, cfg.data.datetime.as_deref())?;
    let width = spec.lag + spec.covariates.len();
    if model.input_dim() != width {
        return Err(Error::Data(format!(
            "model expects {} features, lag {} plus {} covariates gives {width}",
            model.input_dim(),
            spec.lag,
            spec.covariates.len()
        )));
    }
    let start = match cfg.forecast.start {
        Some(s) => s,
        None => {
            let rows = y.len().checked_sub(spec.lag).filter(|&r| r > 0).ok_or_else(|| {
                Error::Data(format!(
                    "series of length {} is too short for lag {}",
                    y.len(),
                    spec.lag
                ))
            })?;
            let [a, b, _] = split_sizes(rows, cfg.data.split)?;
            spec.lag + a + b
        }
    };
    let levels = &cfg.forecast.levels;
    let (fc, truth) = if spec.rollout <= 1 {
        let fc = one_step(&model, &y, &cov, start, spec, levels)?;
        (fc, y[start..].iter().map(|&v| Some(v)).collect::<Vec<_>>())
    } else {
        if start < spec.lag || start > y.len() {
            return Err(Error::Data(format!(
                "rollout start {start} must lie in [{}, {}]",
                spec.lag,
                y.len()
            )));
        }
        let future: Vec<Vec<f64>> = if spec.covariates.is_empty() {
            vec![Vec::new(); spec.rollout]
        } else if start + spec.rollout <= cov.len() {
            cov[start..start + spec.rollout].to_vec()
        } else {
            return Err(Error::Data(format!(
                "rollout of {} steps from {start} needs covariates beyond the {} rows given",
                spec.rollout,
                cov.len()
            )));
        };
        let fc = rollout(&model, &y[..start], &future, spec, levels)?;
        let truth = (0..spec.rollout).map(|i| y.get(start + i).copied()).collect();
        (fc, truth)
    };
    run.emit(
        "forecast.csv",
        PlotData::Forecast(ForecastTable {
            start,
            truth: &truth,
            forecast: &fc,
        }),
    )?;
    run.finish()
}
