//! Tabular regression on the Boston housing data shipped with the tests.
//!
//! Reports median and quantile metrics for the sum composition, in
//! standardized units, against a featureless baseline that predicts the
//! training quantiles for every row.

use nss::composition::{CompositionPlan, NetworkOptions, QuantileModel};
use nss::data::{load_csv, split_dataset, CsvOptions};
use nss::evaluation::{evaluate, gain_percentage, FnQuantile, Normalized};
use nss::training::{fit, TrainConfig};

fn empirical_quantile(sorted: &[f64], a: f64) -> f64 {
    let pos = a * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn main() -> nss::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/boston_housing.csv");
    let data = load_csv(path, "MEDV", &CsvOptions::default())?;
    println!("{} rows, {} features", data.n(), data.d());

    let (splits, stats) = split_dataset(&data, [0.8, 0.1, 0.1], 0, false)?.normalized()?;
    let plan = CompositionPlan::parse("nss-sum", 32, 0.5)?;
    let model = QuantileModel::new(plan, stats, &NetworkOptions::default(), 0)?;
    let cfg = TrainConfig {
        patience: Some(10),
        ..TrainConfig::default()
    };
    let report = fit(model, &splits.train, Some(&splits.val), &cfg)?.into_result()?;
    println!("stopped after {} epochs", report.epochs());

    let levels = [0.1, 0.5, 0.9];
    let nss = evaluate(&Normalized(&report.model), &splits.test, &levels)?;

    let mut sorted = splits.train.targets.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline = evaluate(
        &FnQuantile(|_: &[f64], a| empirical_quantile(&sorted, a)),
        &splits.test,
        &levels,
    )?;

    println!("{:>16} {:>10} {:>10}", "", "nss-sum", "baseline");
    println!("{:>16} {:>10.4} {:>10.4}", "Q50 MAE", nss.point.mae, baseline.point.mae);
    println!(
        "{:>16} {:>10.4} {:>10.4}",
        "avg pinball 99", nss.avg_pinball_99, baseline.avg_pinball_99
    );
    for a in levels {
        println!(
            "{:>16} {:>10.4} {:>10.4}",
            format!("pinball {a}"),
            nss.pinball_at(a).unwrap_or(f64::NAN),
            baseline.pinball_at(a).unwrap_or(f64::NAN)
        );
    }
    println!(
        "gain over baseline (avg pinball): {:.1}%",
        gain_percentage(nss.avg_pinball_99, baseline.avg_pinball_99)?
    );
    Ok(())
}
