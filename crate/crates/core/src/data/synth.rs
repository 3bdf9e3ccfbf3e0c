//! Synthetic data with known conditional distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::composition::QuantileModel;
use crate::error::{Error, Result};
use crate::neural::Matrix;
use crate::spline::normal;

use super::dataset::Dataset;

/// Size of the default synthetic regression set.
pub const SYNTH_DEFAULT_N: usize = 2000;

/// Conditional mean of the synthetic regression target.
pub fn synth_mean(x: f64) -> f64 {
    0.3 * (3.0 * x).sin()
}

/// Conditional standard deviation; the noise variance is `0.2 x^2`.
pub fn synth_sd(x: f64) -> f64 {
    0.2f64.sqrt() * x.abs()
}

/// True `alpha`-quantile of `y | x`.
pub fn synth_quantile(x: f64, alpha: f64) -> Result<f64> {
    crate::spline::check_level(alpha)?;
    let sd = synth_sd(x);
    if sd == 0.0 {
        return Ok(synth_mean(x));
    }
    Ok(synth_mean(x) + sd * normal::inverse_cdf(alpha))
}

fn one_column(name: &str, xs: Vec<f64>, ys: Vec<f64>) -> Result<Dataset> {
    let features = Matrix {
        rows: xs.len(),
        cols: 1,
        data: xs,
    };
    Dataset::new(features, ys, vec![name.to_string()], "y")
}

/// `n` draws of `x ~ U[-2, 2]`, `y ~ N(0.3 sin 3x, 0.2 x^2)`.
pub fn synth_regression(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen_range(-2.0..=2.0);
        let e: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(synth_mean(x) + synth_sd(x) * e);
    }
    one_column("x", xs, ys)
}

/// `n` draws of `y | x` at a fixed `x`.
pub fn synth_slice(x: f64, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ys = (0..n)
        .map(|_| synth_mean(x) + synth_sd(x) * rng.sample::<f64, _>(StandardNormal))
        .collect();
    one_column("x", vec![x; n], ys)
}

/// Equal mixture of two Gaussians whose centres move apart with `x`:
/// `y ~ 0.5 N(-m(x), s^2) + 0.5 N(m(x), s^2)` with `m(x) = 1 + 0.5 x`,
/// `s = 0.3`, `x ~ U[-1, 1]`.
pub fn bimodal_mixture(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen_range(-1.0..=1.0);
        let centre = 1.0 + 0.5 * x;
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let e: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(sign * centre + 0.3 * e);
    }
    one_column("x", xs, ys)
}

/// Targets drawn by `draw`, next to an uninformative uniform feature.
pub fn featureless(n: usize, seed: u64, mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        xs.push(rng.gen::<f64>());
        ys.push(draw(&mut rng));
    }
    one_column("noise", xs, ys)
}

/// `Uniform(0, 1)` targets with no informative feature.
pub fn uniform_featureless(n: usize, seed: u64) -> Result<Dataset> {
    featureless(n, seed, |rng| rng.gen::<f64>())
}

/// Synthetic series `y_t = phi y_{t-1} + amp sin(2 pi t / period) + sigma e_t`
/// together with the covariates `sin(2 pi t / period)`, `cos(2 pi t / period)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalSeries {
    pub values: Vec<f64>,
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
}

pub fn ar_seasonal(n: usize, phi: f64, period: f64, amp: f64, sigma: f64, seed: u64) -> Result<SeasonalSeries> {
    if !(phi.abs() < 1.0) || !(period > 0.0) || !(sigma >= 0.0) {
        return Err(Error::Config(format!(
            "need |phi| < 1, period > 0, sigma >= 0 (got {phi}, {period}, {sigma})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let mut covariates = Vec::with_capacity(n);
    let mut prev = 0.0;
    for t in 0..n {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / period;
        let e: f64 = rng.sample(StandardNormal);
        let y = phi * prev + amp * phase.sin() + sigma * e;
        values.push(y);
        covariates.push(vec![phase.sin(), phase.cos()]);
        prev = y;
    }
    Ok(SeasonalSeries {
        values,
        covariates,
        covariate_names: vec!["season_sin".into(), "season_cos".into()],
    })
}

/// Draws one target per feature row from `model` by inverse-transform
/// sampling: `y = q(x, u)` with `u ~ U(0, 1)`. Features and targets are in
/// the model's raw units.
pub fn sample_from_model(model: &QuantileModel, features: &Matrix, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..features.rows)
        .map(|r| {
            // keep away from the open endpoints of an unbounded basis
            let u = rng.gen_range(1e-12..1.0 - 1e-12);
            model.quantile(features.row(r), u)
        })
        .collect()
}
