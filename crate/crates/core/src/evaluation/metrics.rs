use crate::error::{Error, Result};
use crate::training::pinball;

use super::table::{fmt_float, Table};

/// Point-forecast errors of the median predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// `None` when every truth is zero.
    pub mape: Option<f64>,
    /// Rows left out of the MAPE because their truth is zero.
    pub mape_excluded: usize,
    /// `None` when `sum |truth|` is zero.
    pub wape: Option<f64>,
}

fn check_lengths(truth: &[f64], pred_len: usize) -> Result<()> {
    if truth.is_empty() || truth.len() != pred_len {
        return Err(Error::Data(format!(
            "metrics need equal non-zero lengths, got {} truths and {pred_len} predictions",
            truth.len()
        )));
    }
    Ok(())
}

pub fn point_metrics(truth: &[f64], pred: &[f64]) -> Result<PointMetrics> {
    check_lengths(truth, pred.len())?;
    let n = truth.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut truth_sum = 0.0;
    let mut ape_sum = 0.0;
    let mut ape_n = 0usize;
    for (&t, &p) in truth.iter().zip(pred) {
        let e = (t - p).abs();
        abs_sum += e;
        sq_sum += e * e;
        truth_sum += t.abs();
        if t != 0.0 {
            ape_sum += e / t.abs();
            ape_n += 1;
        }
    }
    let mse = sq_sum / n;
    Ok(PointMetrics {
        mae: abs_sum / n,
        mse,
        rmse: mse.sqrt(),
        mape: (ape_n > 0).then(|| ape_sum / ape_n as f64),
        mape_excluded: truth.len() - ape_n,
        wape: (truth_sum > 0.0).then(|| abs_sum / truth_sum),
    })
}

/// Levels `0.01, 0.02, ..., 0.99`.
pub fn levels_99() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Mean pinball loss per level. `quantiles[i][j]` is the prediction for row
/// `i` at `levels[j]`.
pub fn pinball_by_level(truth: &[f64], quantiles: &[Vec<f64>], levels: &[f64]) -> Result<Vec<f64>> {
    check_lengths(truth, quantiles.len())?;
    for &a in levels {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Domain(format!("evaluation levels must lie in (0, 1), got {a}")));
        }
    }
    let mut sums = vec![0.0; levels.len()];
    for (&y, row) in truth.iter().zip(quantiles) {
        if row.len() != levels.len() {
            return Err(Error::Contract(format!(
                "{} predictions for {} levels",
                row.len(),
                levels.len()
            )));
        }
        for ((s, &q), &a) in sums.iter_mut().zip(row).zip(levels) {
            *s += pinball(y, q, a);
        }
    }
    let n = truth.len() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Point metrics of the median plus pinball losses.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub point: PointMetrics,
    /// `(level, mean pinball)`, in request order.
    pub pinball_by_level: Vec<(f64, f64)>,
    /// Mean pinball over the 99 levels `0.01..=0.99`.
    pub avg_pinball_99: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn pinball_at(&self, level: f64) -> Option<f64> {
        self.pinball_by_level
            .iter()
            .find(|(a, _)| (a - level).abs() < 1e-12)
            .map(|&(_, v)| v)
    }

    /// `metric,level,value` rows; point metrics have an empty level.
    pub fn table(&self) -> Table {
        let mut rows = Vec::new();
        let mut point = |name: &str, v: Option<f64>| {
            rows.push(vec![
                name.to_string(),
                String::new(),
                v.map(fmt_float).unwrap_or_default(),
            ]);
        };
        point("n", Some(self.n as f64));
        point("mae", Some(self.point.mae));
        point("mse", Some(self.point.mse));
        point("rmse", Some(self.point.rmse));
        point("mape", self.point.mape);
        point("mape_excluded", Some(self.point.mape_excluded as f64));
        point("wape", self.point.wape);
        point("avg_pinball_99", Some(self.avg_pinball_99));
        for &(a, v) in &self.pinball_by_level {
            rows.push(vec!["pinball".into(), fmt_float(a), fmt_float(v)]);
        }
        Table::new(&["metric", "level", "value"], rows)
    }
}

/// Relative improvement of `nss` over `baseline`, in percent, positive when
/// `nss` is the smaller loss.
pub fn gain_percentage(nss: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(Error::Domain(format!(
            "gain needs a finite non-zero baseline, got {baseline}"
        )));
    }
    Ok((baseline - nss) / baseline * 100.0)
}
