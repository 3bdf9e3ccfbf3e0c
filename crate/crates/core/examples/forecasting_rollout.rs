//! One-step probabilistic forecasting of an AR(1) series with a seasonal
//! term, plus a short autoregressive rollout.
//!
//! The noise is Gaussian with known sigma, so the 10% and 90% quantile
//! forecasts should cover the truth about 10% and 90% of the time.

use nss::composition::{CompositionPlan, NetworkOptions, QuantileModel};
use nss::data::synth::ar_seasonal;
use nss::data::{lagged_dataset, one_step, rollout, NormStats, SeriesSpec, SplitTag};
use nss::training::{fit, TrainConfig};

fn main() -> nss::Result<()> {
    let s = ar_seasonal(6500, 0.6, 12.0, 1.0, 0.5, 0)?;
    let spec = SeriesSpec {
        lag: 28,
        covariates: s.covariate_names.clone(),
        ..SeriesSpec::default()
    };
    let (train_end, val_end) = (5400, 6000);

    let mut train = lagged_dataset(&s.values[..train_end], &s.covariates[..train_end], &spec)?;
    train.split = SplitTag::Train;
    let stats = NormStats::fit(&train)?;
    let train = train.zscore(&stats)?;
    // validation rows start after the training targets but reuse their lags
    let lo = train_end - spec.lag;
    let mut val = lagged_dataset(&s.values[lo..val_end], &s.covariates[lo..val_end], &spec)?;
    val.split = SplitTag::Val;
    let val = val.zscore(&stats)?;

    let plan = CompositionPlan::parse("nss-sum", 32, 0.5)?;
    let model = QuantileModel::new(plan, stats, &NetworkOptions::default(), 0)?;
    let cfg = TrainConfig {
        patience: Some(10),
        ..TrainConfig::default()
    };
    let model = fit(model, &train, Some(&val), &cfg)?.into_result()?.model;

    let test_end = val_end + 500;
    let f = one_step(
        &model,
        &s.values[..test_end],
        &s.covariates[..test_end],
        val_end,
        &spec,
        &[0.1, 0.5, 0.9],
    )?;
    let truth = &s.values[val_end..test_end];
    let cover =
        |j: usize| f.quantiles.iter().zip(truth).filter(|(q, y)| q[j] >= **y).count() as f64 / truth.len() as f64;
    println!(
        "one-step coverage over {} steps: Q10 {:.3}, Q90 {:.3}",
        truth.len(),
        cover(0),
        cover(2)
    );

    let history = &s.values[..val_end];
    let r = rollout(
        &model,
        history,
        &s.covariates[val_end..val_end + 12],
        &spec,
        &[0.1, 0.5, 0.9],
    )?;
    println!("\n12-step rollout (median fed back)");
    println!("{:>4} {:>8} {:>8} {:>8} {:>8}", "step", "truth", "q10", "q50", "q90");
    for (i, q) in r.quantiles.iter().enumerate() {
        println!(
            "{:>4} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            i + 1,
            s.values[val_end + i],
            q[0],
            q[1],
            q[2]
        );
    }
    Ok(())
}
