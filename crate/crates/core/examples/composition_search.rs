//! Search over composition plans on a bimodal target.
//!
//! Each candidate is trained with the same seed and budget and ranked by
//! validation CRPS; the leaderboard is printed best first.

use nss::composition::{search, CandidateSpace, CompositionPlan, Mode, NetworkOptions, SearchConfig, StageSpec};
use nss::data::split_dataset;
use nss::data::synth::bimodal_mixture;
use nss::spline::BasisKind;
use nss::training::TrainConfig;

fn main() -> nss::Result<()> {
    let data = bimodal_mixture(2000, 1)?;
    let (splits, _) = split_dataset(&data, [0.8, 0.1, 0.1], 0, false)?.normalized()?;

    let c = StageSpec::new(BasisKind::CSpline, 16);
    let p = StageSpec::new(BasisKind::PSpline, 16);
    let plans = vec![
        CompositionPlan::single(BasisKind::Gaussian, 0),
        CompositionPlan::single(BasisKind::CSpline, 16),
        CompositionPlan::single(BasisKind::PSpline, 16),
        CompositionPlan::sum(vec![c, p], 0.5),
        CompositionPlan::chain(Mode::AlphaChain, vec![c, p]),
        CompositionPlan::chain(Mode::XChain, vec![c, c]),
    ];
    let cfg = SearchConfig {
        space: CandidateSpace::Explicit(plans),
        train: TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        },
        network: NetworkOptions {
            hidden: vec![32, 32],
            ..NetworkOptions::default()
        },
        ..SearchConfig::default()
    };
    let out = search(&cfg, &splits.train, &splits.val)?;

    println!("{:>4} {:>28} {:>10} {:>8}", "rank", "plan", "val CRPS", "params");
    for (rank, e) in out.leaderboard.iter().enumerate() {
        let crps = e.val_crps.map_or("failed".to_string(), |v| format!("{v:.5}"));
        println!("{:>4} {:>28} {crps:>10} {:>8}", rank + 1, e.plan.label(), e.params);
    }
    println!("selected: {}", out.best.plan);
    Ok(())
}
