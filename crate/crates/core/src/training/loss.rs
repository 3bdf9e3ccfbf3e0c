use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile (pinball) loss `(y - q)(alpha - 1{y < q})`.
pub fn pinball(y: f64, q: f64, alpha: f64) -> f64 {
    let ind = if y < q { 1.0 } else { 0.0 };
    (y - q) * (alpha - ind)
}

/// Derivative of [`pinball`] with respect to `q`. A tie `y == q` takes the
/// `y >= q` branch.
pub fn pinball_grad(y: f64, q: f64, alpha: f64) -> f64 {
    let ind = if y < q { 1.0 } else { 0.0 };
    -(alpha - ind)
}

/// How the Monte-Carlo level grid is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    /// `(i - 0.5) / m`, deterministic.
    #[default]
    Midpoint,
    /// One uniform draw in each stratum `[i/m, (i+1)/m)`.
    Stratified,
    /// `0, 1/m, ..., 1` (m + 1 points); spline-only models.
    Inclusive,
}

impl std::str::FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "midpoint" => Ok(GridMode::Midpoint),
            "stratified" | "stratified-random" => Ok(GridMode::Stratified),
            "inclusive" => Ok(GridMode::Inclusive),
            other => Err(Error::Config(format!("unknown grid mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for GridMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridMode::Midpoint => "midpoint",
            GridMode::Stratified => "stratified",
            GridMode::Inclusive => "inclusive",
        })
    }
}

/// `(i - 0.5) / m` for `i = 1..=m`.
pub fn midpoint_levels(m: usize) -> Vec<f64> {
    (1..=m).map(|i| (i as f64 - 0.5) / m as f64).collect()
}

/// Level grid for one loss evaluation. `rng` is only consulted in
/// stratified mode.
pub fn grid_levels(m: usize, mode: GridMode, rng: &mut impl Rng) -> Vec<f64> {
    let mf = m as f64;
    match mode {
        GridMode::Midpoint => midpoint_levels(m),
        GridMode::Stratified => (0..m).map(|i| (i as f64 + rng.gen::<f64>()) / mf).collect(),
        GridMode::Inclusive => (0..=m).map(|i| i as f64 / mf).collect(),
    }
}

/// Monte-Carlo CRPS of one observation: the grid mean of `2 * pinball`.
pub fn crps_estimate(y: f64, qfn: impl Fn(f64) -> f64, m: usize, mode: GridMode, seed: u64) -> Result<f64> {
    if m < 2 {
        return Err(Error::Config(format!("the level grid needs m >= 2, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = grid_levels(m, mode, &mut rng);
    let mut total = 0.0;
    for &a in &levels {
        let q = qfn(a);
        if !q.is_finite() {
            return Err(Error::Training(format!("quantile function is not finite at level {a}")));
        }
        total += 2.0 * pinball(y, q, a);
    }
    Ok(total / levels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball(0.3, 0.3, 0.9), 0.0);
        assert!((pinball(1.0, 0.0, 0.9) - 0.9).abs() < 1e-15);
        assert!((pinball(0.0, 1.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pinball_grad_tie_takes_upper_branch() {
        assert_eq!(pinball_grad(1.0, 1.0, 0.3), -0.3);
        assert_eq!(pinball_grad(0.0, 1.0, 0.3), 0.7);
    }

    #[test]
    fn constant_predictor_gives_absolute_error() {
        for m in [2, 3, 7, 32, 1000] {
            let c = crps_estimate(1.0, |_| 0.0, m, GridMode::Midpoint, 0).unwrap();
            assert!((c - 1.0).abs() < 1e-12, "m={m}: {c}");
            let c = crps_estimate(0.0, |_| 1.0, m, GridMode::Midpoint, 0).unwrap();
            assert!((c - 1.0).abs() < 1e-12);
        }
        assert_eq!(crps_estimate(0.4, |_| 0.4, 8, GridMode::Midpoint, 0).unwrap(), 0.0);
    }

    #[test]
    fn grids_have_expected_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            grid_levels(4, GridMode::Midpoint, &mut rng),
            vec![0.125, 0.375, 0.625, 0.875]
        );
        assert_eq!(grid_levels(2, GridMode::Inclusive, &mut rng), vec![0.0, 0.5, 1.0]);
        let s = grid_levels(10, GridMode::Stratified, &mut rng);
        for (i, a) in s.iter().enumerate() {
            assert!(*a >= i as f64 / 10.0 && *a < (i + 1) as f64 / 10.0);
        }
    }

    #[test]
    fn rejects_tiny_grid_and_non_finite_quantiles() {
        assert!(crps_estimate(0.0, |a| a, 1, GridMode::Midpoint, 0).is_err());
        assert!(matches!(
            crps_estimate(0.0, |_| f64::NAN, 4, GridMode::Midpoint, 0),
            Err(Error::Training(_))
        ));
    }
}
