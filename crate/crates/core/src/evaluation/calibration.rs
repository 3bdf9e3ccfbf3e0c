use crate::error::{Error, Result};
use crate::neural::Matrix;

use super::table::{fmt_float, Table};
use super::ConditionalQuantile;

/// Empirical coverage `c(p) = mean 1{q(x_i, p) >= y_i}` per nominal level.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    /// Free-form description of the evaluation slice, e.g. `x=0.5`.
    pub slice: String,
    pub levels: Vec<f64>,
    pub coverage: Vec<f64>,
    pub n: usize,
}

/// `0.1, 0.2, ..., 0.9`.
pub fn deciles() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl CalibrationCurve {
    /// Largest `|c(p) - p|`.
    pub fn max_deviation(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.coverage)
            .map(|(p, c)| (c - p).abs())
            .fold(0.0, f64::max)
    }

    /// `slice,level,coverage` rows.
    pub fn table(&self) -> Table {
        Self::table_of(std::slice::from_ref(self))
    }

    /// Several curves stacked into one table.
    pub fn table_of(curves: &[CalibrationCurve]) -> Table {
        let rows = curves
            .iter()
            .flat_map(|c| {
                c.levels
                    .iter()
                    .zip(&c.coverage)
                    .map(|(p, v)| vec![c.slice.clone(), fmt_float(*p), fmt_float(*v)])
            })
            .collect();
        Table::new(&["slice", "level", "coverage"], rows)
    }
}

pub fn calibration_curve(
    model: &impl ConditionalQuantile,
    xs: &Matrix,
    ys: &[f64],
    levels: &[f64],
    slice: impl Into<String>,
) -> Result<CalibrationCurve> {
    if ys.is_empty() || xs.rows != ys.len() {
        return Err(Error::Data(format!(
            "calibration needs a non-empty slice with one target per row ({} rows, {} targets)",
            xs.rows,
            ys.len()
        )));
    }
    let q = model.quantiles(xs, levels)?;
    let mut hits = vec![0usize; levels.len()];
    for (r, &y) in ys.iter().enumerate() {
        for (h, &qv) in hits.iter_mut().zip(q.row(r)) {
            if qv >= y {
                *h += 1;
            }
        }
    }
    Ok(CalibrationCurve {
        slice: slice.into(),
        levels: levels.to_vec(),
        coverage: hits.into_iter().map(|h| h as f64 / ys.len() as f64).collect(),
        n: ys.len(),
    })
}
