//! Heteroscedastic synthetic regression: `y ~ N(0.3 sin 3x, 0.2 x^2)`.
//!
//! Trains the sum composition `c-spline + 0.5 p-spline` and prints the
//! calibration of its deciles at three x-slices next to the true law.

use nss::composition::{CompositionPlan, NetworkOptions, QuantileModel};
use nss::data::split_dataset;
use nss::data::synth::{synth_quantile, synth_regression, synth_slice};
use nss::evaluation::{calibration_curve, deciles};
use nss::training::{fit, TrainConfig};

fn main() -> nss::Result<()> {
    let data = synth_regression(2000, 7)?;
    let (splits, stats) = split_dataset(&data, [0.8, 0.1, 0.1], 0, false)?.normalized()?;

    let plan = CompositionPlan::parse("nss-sum", 32, 0.5)?;
    let model = QuantileModel::new(plan, stats, &NetworkOptions::default(), 0)?;
    let report = fit(model, &splits.train, Some(&splits.val), &TrainConfig::default())?.into_result()?;
    println!(
        "trained {} for {} epochs, validation CRPS {:.4}",
        report.model.plan,
        report.epochs(),
        report.best_val().unwrap_or(f64::NAN)
    );

    for (i, x) in [0.5, 1.0, 1.5].into_iter().enumerate() {
        let slice = synth_slice(x, 5000, 99 + i as u64)?;
        let curve = calibration_curve(
            &report.model,
            &slice.features,
            &slice.targets,
            &deciles(),
            format!("x={x}"),
        )?;
        println!("\nx = {x}: max |coverage - level| = {:.3}", curve.max_deviation());
        println!("{:>6} {:>9} {:>9} {:>9}", "level", "coverage", "q_model", "q_true");
        for (&a, &cov) in curve.levels.iter().zip(&curve.coverage) {
            let q = report.model.quantile(&[x], a)?;
            println!("{a:>6.1} {cov:>9.3} {q:>9.4} {:>9.4}", synth_quantile(x, a)?);
        }
    }
    Ok(())
}
