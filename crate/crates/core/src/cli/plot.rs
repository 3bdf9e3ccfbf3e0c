//! Plot-ready CSV exports.
//!
//! Every export has a fixed column order, LF line endings and floats with 17
//! significant digits. Headers:
//!
//! | kind          | columns                                            |
//! |---------------|----------------------------------------------------|
//! | dataset       | feature columns..., target                         |
//! | train-report  | `epoch,train_loss,val_loss`                        |
//! | leaderboard   | `rank,index,plan,val_crps,params,epochs,diagnostic` |
//! | metrics       | `metric,level,value`                               |
//! | calibration   | `slice,level,coverage`                             |
//! | band          | `x,level,quantile`                                 |
//! | forecast      | `t,y,q_<level>...[,fed_back]`                      |

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::composition::{LeaderboardEntry, QuantileModel};
use crate::data::{Dataset, Forecast};
use crate::error::{Error, Result};
use crate::evaluation::{fmt_float, CalibrationCurve, MetricReport, Table};
use crate::neural::Matrix;
use crate::training::TrainReport;

/// Dense `q(x, alpha)` over a grid of one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileBand {
    pub xs: Vec<f64>,
    pub levels: Vec<f64>,
    /// `values[i][j]` is the quantile at `xs[i]`, `levels[j]`.
    pub values: Vec<Vec<f64>>,
}

/// `levels` equally spaced interior levels `i / (levels + 1)`.
pub fn band_levels(levels: usize) -> Vec<f64> {
    (1..=levels).map(|i| i as f64 / (levels + 1) as f64).collect()
}

/// Evaluates `model` on `points` evenly spaced values of feature `feature`
/// between `x_min` and `x_max` (raw units); other features are held at the
/// training mean.
pub fn quantile_band(
    model: &QuantileModel,
    feature: usize,
    x_min: f64,
    x_max: f64,
    points: usize,
    levels: &[f64],
) -> Result<QuantileBand> {
    let d = model.input_dim();
    if feature >= d {
        return Err(Error::Config(format!(
            "feature {feature} out of range for a {d}-feature model"
        )));
    }
    if points < 2 || !(x_min < x_max) {
        return Err(Error::Config(format!(
            "band needs at least 2 points on a non-empty range (got {points} on [{x_min}, {x_max}])"
        )));
    }
    let xs: Vec<f64> = (0..points)
        .map(|i| x_min + (x_max - x_min) * i as f64 / (points - 1) as f64)
        .collect();
    let mut m = Matrix::zeros(points, d);
    for (r, &x) in xs.iter().enumerate() {
        m.row_mut(r).copy_from_slice(&model.stats.feature_mean);
        m.row_mut(r)[feature] = x;
    }
    let q = model.quantiles(&m, levels)?;
    Ok(QuantileBand {
        xs,
        levels: levels.to_vec(),
        values: (0..points).map(|r| q.row(r).to_vec()).collect(),
    })
}

/// Forecasts with their time index and the observed value, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTable<'a> {
    pub start: usize,
    pub truth: &'a [Option<f64>],
    pub forecast: &'a Forecast,
}

/// Payloads accepted by [`emit_plot_data`].
#[derive(Debug, Clone)]
pub enum PlotData<'a> {
    Dataset(&'a Dataset),
    TrainReport(&'a TrainReport),
    Leaderboard(&'a [LeaderboardEntry]),
    Metrics(&'a MetricReport),
    Calibration(&'a [CalibrationCurve]),
    Band(&'a QuantileBand),
    Forecast(ForecastTable<'a>),
}

fn level_name(a: f64) -> String {
    format!("q_{a}")
}

impl PlotData<'_> {
    pub fn kind(&self) -> &'static str {
        match self {
            PlotData::Dataset(_) => "dataset",
            PlotData::TrainReport(_) => "train-report",
            PlotData::Leaderboard(_) => "leaderboard",
            PlotData::Metrics(_) => "metrics",
            PlotData::Calibration(_) => "calibration",
            PlotData::Band(_) => "band",
            PlotData::Forecast(_) => "forecast",
        }
    }

    pub fn table(&self) -> Table {
        match self {
            PlotData::Dataset(d) => {
                let mut header: Vec<&str> = d.columns.iter().map(String::as_str).collect();
                header.push(&d.target_name);
                let rows = (0..d.n())
                    .map(|i| {
                        let mut r: Vec<String> = d.row(i).iter().map(|&v| fmt_float(v)).collect();
                        r.push(fmt_float(d.targets[i]));
                        r
                    })
                    .collect();
                Table::new(&header, rows)
            }
            PlotData::TrainReport(r) => {
                let rows = (0..r.epochs())
                    .map(|e| {
                        vec![
                            (e + 1).to_string(),
                            fmt_float(r.train_loss[e]),
                            r.val_loss.get(e).map(|&v| fmt_float(v)).unwrap_or_default(),
                        ]
                    })
                    .collect();
                Table::new(&["epoch", "train_loss", "val_loss"], rows)
            }
            PlotData::Leaderboard(entries) => {
                let rows = entries
                    .iter()
                    .enumerate()
                    .map(|(rank, e)| {
                        vec![
                            (rank + 1).to_string(),
                            e.index.to_string(),
                            e.plan.label(),
                            e.val_crps.map(fmt_float).unwrap_or_default(),
                            e.params.to_string(),
                            e.epochs.to_string(),
                            e.diagnostic.clone().unwrap_or_default(),
                        ]
                    })
                    .collect();
                Table::new(
                    &["rank", "index", "plan", "val_crps", "params", "epochs", "diagnostic"],
                    rows,
                )
            }
            PlotData::Metrics(m) => m.table(),
            PlotData::Calibration(c) => CalibrationCurve::table_of(c),
            PlotData::Band(b) => {
                let rows =
                    b.xs.iter()
                        .zip(&b.values)
                        .flat_map(|(&x, qs)| {
                            b.levels
                                .iter()
                                .zip(qs)
                                .map(move |(&a, &q)| vec![fmt_float(x), fmt_float(a), fmt_float(q)])
                        })
                        .collect();
                Table::new(&["x", "level", "quantile"], rows)
            }
            PlotData::Forecast(f) => {
                let levels: Vec<String> = f.forecast.levels.iter().map(|&a| level_name(a)).collect();
                let mut header: Vec<&str> = vec!["t", "y"];
                header.extend(levels.iter().map(String::as_str));
                let with_path = !f.forecast.path.is_empty();
                if with_path {
                    header.push("fed_back");
                }
                let rows = f
                    .forecast
                    .quantiles
                    .iter()
                    .enumerate()
                    .map(|(i, qs)| {
                        let mut r = vec![
                            (f.start + i).to_string(),
                            f.truth.get(i).copied().flatten().map(fmt_float).unwrap_or_default(),
                        ];
                        r.extend(qs.iter().map(|&q| fmt_float(q)));
                        if with_path {
                            r.push(fmt_float(f.forecast.path[i]));
                        }
                        r
                    })
                    .collect();
                Table::new(&header, rows)
            }
        }
    }
}

/// Writes `payload` as CSV to `path` and returns the SHA-256 of the bytes.
pub fn emit_plot_data(payload: &PlotData<'_>, path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let text = payload.table().to_csv()?;
    fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}
