//! Lagged features and autoregressive rollout for one-step forecasting.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composition::QuantileModel;
use crate::error::{Error, Result};
use crate::neural::Matrix;

use super::dataset::Dataset;

/// What is fed back as the next lag during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feedback {
    /// The predicted median.
    #[default]
    Median,
    /// A draw `q(x, u)`, `u ~ U(0, 1)`, from a stream seeded with the value.
    Sample(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSpec {
    /// Number of past values used as features.
    pub lag: usize,
    /// Names of exogenous covariate columns.
    pub covariates: Vec<String>,
    /// Steps per forecast; only one-step models are supported.
    pub horizon: usize,
    /// Rollout length.
    pub rollout: usize,
    pub feedback: Feedback,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        Self {
            lag: 28,
            covariates: Vec::new(),
            horizon: 1,
            rollout: 1,
            feedback: Feedback::Median,
        }
    }
}

impl SeriesSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lag == 0 {
            return Err(Error::Config("lag window must be >= 1".into()));
        }
        if self.horizon != 1 {
            return Err(Error::Config(format!(
                "only one-step forecasting is supported, got horizon {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Feature names: `lag_L, ..., lag_1`, then the covariates.
    pub fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = (1..=self.lag).rev().map(|k| format!("lag_{k}")).collect();
        c.extend(self.covariates.iter().cloned());
        c
    }
}

fn check_covariates(spec: &SeriesSpec, covariates: &[Vec<f64>], len: usize) -> Result<()> {
    if covariates.len() != len {
        return Err(Error::Data(format!(
            "{} covariate rows for a series of length {len}",
            covariates.len()
        )));
    }
    if let Some(t) = covariates.iter().position(|row| row.len() != spec.covariates.len()) {
        return Err(Error::Data(format!(
            "covariate row {t} has {} values, expected {}",
            covariates[t].len(),
            spec.covariates.len()
        )));
    }
    Ok(())
}

fn feature_row(spec: &SeriesSpec, lags: &[f64], cov: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(spec.lag + cov.len());
    row.extend_from_slice(&lags[lags.len() - spec.lag..]);
    row.extend_from_slice(cov);
    row
}

/// Supervised pairs `([y_{t-L} .. y_{t-1}, cov_t], y_t)` for `t >= L`.
///
/// `covariates[t]` holds the covariates known at time `t`; pass an empty
/// row per step when there are none.
pub fn lagged_dataset(series: &[f64], covariates: &[Vec<f64>], spec: &SeriesSpec) -> Result<Dataset> {
    spec.validate()?;
    if series.len() <= spec.lag {
        return Err(Error::Data(format!(
            "series of length {} is too short for a lag window of {}",
            series.len(),
            spec.lag
        )));
    }
    check_covariates(spec, covariates, series.len())?;
    let rows: Vec<Vec<f64>> = (spec.lag..series.len())
        .map(|t| feature_row(spec, &series[..t], &covariates[t]))
        .collect();
    Dataset::new(
        Matrix::from_rows(&rows),
        series[spec.lag..].to_vec(),
        spec.columns(),
        "y",
    )
}

/// Reads a series and its covariates from a headered CSV.
///
/// Rows are sorted by `datetime` when given (ties keep file order). Every
/// cell used must be a finite number; diagnostics number data rows from 1.
pub fn load_series_csv(
    path: impl AsRef<Path>,
    target: &str,
    covariates: &[String],
    datetime: Option<&str>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{}: no column named '{name}'", path.display())))
    };
    let t_idx = find(target)?;
    let c_idx = covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let d_idx = datetime.map(find).transpose()?;
    let mut rows: Vec<(String, f64, Vec<f64>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| Error::Data(format!("{}: row {row_no}: {e}", path.display())))?;
        let cell = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Data(format!(
                    "{}: row {row_no}, column '{}': cannot use value '{raw}'",
                    path.display(),
                    header[idx]
                ))),
            }
        };
        let key = d_idx
            .map(|d| record.get(d).unwrap_or("").to_string())
            .unwrap_or_default();
        rows.push((
            key,
            cell(t_idx)?,
            c_idx.iter().map(|&c| cell(c)).collect::<Result<_>>()?,
        ));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    if d_idx.is_some() {
        rows.sort_by(|a, b| a.0.cmp(&b.0));
    }
    Ok(rows.into_iter().map(|(_, y, c)| (y, c)).unzip())
}

/// Quantile forecasts, one row per step and one column per level.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub levels: Vec<f64>,
    pub quantiles: Vec<Vec<f64>>,
    /// Value fed back after each step (rollout only).
    pub path: Vec<f64>,
}

/// Autoregressive rollout after `history`.
///
/// One step per row of `future_covariates`. Each step's features are the
/// last `L` values of the history extended with earlier fed-back
/// predictions.
pub fn rollout(
    model: &QuantileModel,
    history: &[f64],
    future_covariates: &[Vec<f64>],
    spec: &SeriesSpec,
    levels: &[f64],
) -> Result<Forecast> {
    spec.validate()?;
    if history.len() < spec.lag {
        return Err(Error::Data(format!(
            "history of length {} is shorter than the lag window {}",
            history.len(),
            spec.lag
        )));
    }
    check_covariates(spec, future_covariates, future_covariates.len())?;
    let mut rng = match spec.feedback {
        Feedback::Sample(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Feedback::Median => None,
    };
    let mut window = history[history.len() - spec.lag..].to_vec();
    let mut quantiles = Vec::with_capacity(future_covariates.len());
    let mut path = Vec::with_capacity(future_covariates.len());
    for cov in future_covariates {
        let x = feature_row(spec, &window, cov);
        let xm = Matrix::from_rows(&[x.clone()]);
        quantiles.push(model.quantiles(&xm, levels)?.data);
        let next = match rng.as_mut() {
            Some(r) => model.quantile(&x, r.gen_range(1e-6..1.0 - 1e-6))?,
            None => model.quantile(&x, 0.5)?,
        };
        path.push(next);
        window.remove(0);
        window.push(next);
    }
    Ok(Forecast {
        levels: levels.to_vec(),
        quantiles,
        path,
    })
}

/// One-step forecasts for `t` in `start..series.len()`, each using the
/// observed values before `t`.
pub fn one_step(
    model: &QuantileModel,
    series: &[f64],
    covariates: &[Vec<f64>],
    start: usize,
    spec: &SeriesSpec,
    levels: &[f64],
) -> Result<Forecast> {
    spec.validate()?;
    check_covariates(spec, covariates, series.len())?;
    if start < spec.lag || start >= series.len() {
        return Err(Error::Data(format!(
            "forecast start {start} must lie in [{}, {})",
            spec.lag,
            series.len()
        )));
    }
    let rows: Vec<Vec<f64>> = (start..series.len())
        .map(|t| feature_row(spec, &series[..t], &covariates[t]))
        .collect();
    let q = model.quantiles(&Matrix::from_rows(&rows), levels)?;
    Ok(Forecast {
        levels: levels.to_vec(),
        quantiles: (0..q.rows).map(|r| q.row(r).to_vec()).collect(),
        path: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lag: usize) -> SeriesSpec {
        SeriesSpec {
            lag,
            ..SeriesSpec::default()
        }
    }

    #[test]
    fn lagged_rows_line_up() {
        let s: Vec<f64> = (0..6).map(f64::from).collect();
        let d = lagged_dataset(&s, &vec![vec![]; 6], &spec(2)).unwrap();
        assert_eq!(d.n(), 4);
        assert_eq!(d.row(0), &[0.0, 1.0]);
        assert_eq!(d.targets[0], 2.0);
        assert_eq!(d.columns, vec!["lag_2", "lag_1"]);
    }

    #[test]
    fn too_short_series_is_rejected() {
        let s = vec![1.0; 28];
        assert!(matches!(
            lagged_dataset(&s, &vec![vec![]; 28], &SeriesSpec::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn covariates_are_appended() {
        let s = vec![1.0, 2.0, 3.0];
        let cov = vec![vec![10.0], vec![20.0], vec![30.0]];
        let sp = SeriesSpec {
            lag: 1,
            covariates: vec!["c".into()],
            ..SeriesSpec::default()
        };
        let d = lagged_dataset(&s, &cov, &sp).unwrap();
        assert_eq!(d.row(1), &[2.0, 30.0]);
    }

    #[test]
    fn multi_step_horizon_is_rejected() {
        let sp = SeriesSpec {
            horizon: 2,
            ..SeriesSpec::default()
        };
        assert!(sp.validate().is_err());
    }
}
