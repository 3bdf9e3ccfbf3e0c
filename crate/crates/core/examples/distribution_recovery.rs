//! CRPS training recovers a known distribution.
//!
//! With an uninformative input, the model that minimizes CRPS is the target's
//! own quantile function. Here the targets are Uniform(0, 1), so the learned
//! `q(alpha)` should sit on the diagonal.

use nss::composition::{CompositionPlan, NetworkOptions, QuantileModel};
use nss::data::synth::uniform_featureless;
use nss::data::NormStats;
use nss::neural::Matrix;
use nss::spline::BasisKind;
use nss::training::{fit, TrainConfig};
use nss::Dataset;

fn main() -> nss::Result<()> {
    let raw = uniform_featureless(2000, 3)?;
    // replace the noise feature with a constant so the input carries nothing
    let data = Dataset::new(Matrix::zeros(raw.n(), 1), raw.targets.clone(), vec!["one".into()], "y")?;
    let n = data.n() as f64;
    let mean = data.targets.iter().sum::<f64>() / n;
    let std = (data.targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    // a constant column has no z-score, so the statistics are written out
    let stats = NormStats {
        feature_mean: vec![0.0],
        feature_std: vec![1.0],
        target_mean: mean,
        target_std: std,
    };
    let train = data.zscore(&stats)?;

    for kind in [BasisKind::CSpline, BasisKind::PSpline] {
        let model = QuantileModel::new(
            CompositionPlan::single(kind, 16),
            stats.clone(),
            &NetworkOptions::default(),
            0,
        )?;
        let trained = fit(model, &train, None, &TrainConfig::default())?.into_result()?.model;
        let worst = (1..100)
            .map(|i| {
                let a = i as f64 / 100.0;
                trained.quantile(&[0.0], a).map(|q| (q - a).abs())
            })
            .collect::<nss::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        println!("{kind:?}: max |q(alpha) - alpha| over 99 levels = {worst:.4}");
        for a in [0.1, 0.5, 0.9] {
            println!("  q({a}) = {:.4}", trained.quantile(&[0.0], a)?);
        }
    }
    Ok(())
}
