//! Point and quantile metrics, calibration curves, CSV tables.

mod calibration;
mod metrics;
mod table;

pub use calibration::{calibration_curve, deciles, CalibrationCurve};
pub use metrics::{gain_percentage, levels_99, pinball_by_level, point_metrics, MetricReport, PointMetrics};
pub use table::{fmt_float, Table};

use crate::composition::QuantileModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::neural::Matrix;

/// Anything that predicts conditional quantiles for a batch of inputs.
pub trait ConditionalQuantile {
    /// One row per input, one column per level.
    fn quantiles(&self, xs: &Matrix, levels: &[f64]) -> Result<Matrix>;
}

/// Raw features in, raw target units out.
impl ConditionalQuantile for QuantileModel {
    fn quantiles(&self, xs: &Matrix, levels: &[f64]) -> Result<Matrix> {
        QuantileModel::quantiles(self, xs, levels)
    }
}

/// A model evaluated entirely in standardized units.
#[derive(Debug, Clone, Copy)]
pub struct Normalized<'a>(pub &'a QuantileModel);

impl ConditionalQuantile for Normalized<'_> {
    fn quantiles(&self, xs: &Matrix, levels: &[f64]) -> Result<Matrix> {
        self.0.quantiles_normalized(xs, levels)
    }
}

/// Wraps a closure `(x, level) -> quantile`.
#[derive(Debug, Clone, Copy)]
pub struct FnQuantile<F>(pub F);

impl<F: Fn(&[f64], f64) -> f64> ConditionalQuantile for FnQuantile<F> {
    fn quantiles(&self, xs: &Matrix, levels: &[f64]) -> Result<Matrix> {
        let mut out = Matrix::zeros(xs.rows, levels.len());
        for r in 0..xs.rows {
            for (j, &a) in levels.iter().enumerate() {
                out.data[r * levels.len() + j] = (self.0)(xs.row(r), a);
            }
        }
        Ok(out)
    }
}

/// Median point metrics, pinball loss at `levels` and the 99-level average.
///
/// Targets and predictions are compared in whatever units `data` and
/// `model` share.
pub fn evaluate(model: &impl ConditionalQuantile, data: &Dataset, levels: &[f64]) -> Result<MetricReport> {
    let mut all = levels_99();
    let extra: Vec<f64> = levels
        .iter()
        .copied()
        .filter(|a| !all.iter().any(|b| (a - b).abs() < 1e-12))
        .collect();
    all.extend(&extra);
    if !all.iter().any(|&a| a == 0.5) {
        all.push(0.5);
    }
    let q = model.quantiles(&data.features, &all)?;
    let rows: Vec<Vec<f64>> = (0..q.rows).map(|r| q.row(r).to_vec()).collect();
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Training("model produced non-finite quantiles".into()));
    }
    let by = pinball_by_level(&data.targets, &rows, &all)?;
    let idx = |a: f64| all.iter().position(|b| (a - b).abs() < 1e-12).expect("level present");
    let median: Vec<f64> = rows.iter().map(|r| r[idx(0.5)]).collect();
    Ok(MetricReport {
        point: point_metrics(&data.targets, &median)?,
        pinball_by_level: levels.iter().map(|&a| (a, by[idx(a)])).collect(),
        avg_pinball_99: by[..99].iter().sum::<f64>() / 99.0,
        n: data.n(),
    })
}

/// [`evaluate`] for a trained model, with the data brought to the
/// requested units (standardized with the model's statistics, or raw).
pub fn evaluate_model(
    model: &QuantileModel,
    data: &Dataset,
    levels: &[f64],
    normalized_units: bool,
) -> Result<MetricReport> {
    match (data.is_normalized(), normalized_units) {
        (true, true) => evaluate(&Normalized(model), data, levels),
        (true, false) => evaluate(model, &data.denormalized(), levels),
        (false, true) => evaluate(&Normalized(model), &data.zscore(&model.stats)?, levels),
        (false, false) => evaluate(model, data, levels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(ys: Vec<f64>) -> Dataset {
        let n = ys.len();
        Dataset::new(Matrix::from_rows(&vec![vec![0.0]; n]), ys, vec!["x".into()], "y").unwrap()
    }

    #[test]
    fn perfect_model_scores_zero() {
        let d = data(vec![2.0; 5]);
        let r = evaluate(&FnQuantile(|_: &[f64], _| 2.0), &d, &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(r.avg_pinball_99, 0.0);
        assert!(r.pinball_by_level.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn median_pinball_is_half_mae() {
        let d = data(vec![0.3, -1.0, 2.5, 0.0]);
        let r = evaluate(&FnQuantile(|_: &[f64], a| a - 0.2), &d, &[0.5]).unwrap();
        assert!((r.pinball_at(0.5).unwrap() - 0.5 * r.point.mae).abs() < 1e-12);
    }

    #[test]
    fn average_is_mean_of_levels() {
        let d = data(vec![0.3, -1.0, 2.5]);
        let levels = levels_99();
        let r = evaluate(&FnQuantile(|_: &[f64], a| 3.0 * a - 1.0), &d, &levels).unwrap();
        let mean = r.pinball_by_level.iter().map(|&(_, v)| v).sum::<f64>() / 99.0;
        assert!((mean - r.avg_pinball_99).abs() < 1e-12);
    }
}
