//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Exits non-zero when a
//! criterion fails that is not listed in `KNOWN_FAILURES`.

mod common;

use std::time::{Duration, Instant};

use nss::composition::{
    search, CandidateSpace, CompositionPlan, Mode, NetworkOptions, QuantileModel, SearchConfig, StageSpec,
};
use nss::data::synth::{ar_seasonal, bimodal_mixture, synth_regression, synth_slice, uniform_featureless};
use nss::data::{lagged_dataset, load_csv, one_step, split_dataset, CsvOptions, NormStats, SeriesSpec, SplitTag};
use nss::evaluation::{calibration_curve, deciles, evaluate, levels_99, FnQuantile, Normalized};
use nss::neural::{HeadSpec, Matrix};
use nss::spline::{BasisKind, CSplineParams};
use nss::training::{crps_estimate, fit, GridMode, TrainConfig};
use nss::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Criteria expected to fail; see the project notes for the analysis.
const KNOWN_FAILURES: &[usize] = &[2, 7, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(pass: bool, elapsed: Duration, budget: Option<Duration>) -> bool {
    pass && budget.is_none_or(|b| elapsed < b)
}

fn random_head(rng: &mut ChaCha8Rng, kind: BasisKind) -> HeadSpec {
    HeadSpec {
        kind,
        knots: rng.gen_range(1..=32),
        span: 4.0,
    }
}

fn random_raw(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let scale = [0.1, 1.0, 5.0, 50.0][rng.gen_range(0..4)];
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn ordered_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (a, b): (f64, f64) = (rng.gen(), rng.gen());
    (a.min(b), a.max(b))
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checks = 0usize;
    let mut violations = Vec::new();
    for kind in BasisKind::ALL {
        for _ in 0..1000 {
            let head = random_head(&mut rng, kind);
            let p = head.constrain(&random_raw(&mut rng, head.raw_len())).unwrap();
            for _ in 0..100 {
                let (a, b) = ordered_pair(&mut rng);
                let (qa, qb) = (p.quantile(a).unwrap(), p.quantile(b).unwrap());
                checks += 1;
                if qa > qb {
                    violations.push(format!("{kind:?} q({a})={qa} > q({b})={qb}"));
                }
            }
        }
    }
    for mode in Mode::ALL {
        for _ in 0..1000 {
            let plan = common::random_plan(mode, &mut rng);
            let d = rng.gen_range(1..=3);
            let scale = rng.gen_range(0.0..3.0);
            let model = common::random_model(plan, d, scale, &mut rng);
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for _ in 0..100 {
                let (a, b) = ordered_pair(&mut rng);
                let (qa, qb) = (model.quantile(&x, a).unwrap(), model.quantile(&x, b).unwrap());
                checks += 1;
                if qa > qb {
                    violations.push(format!("{} q({a})={qa} > q({b})={qb}", model.plan));
                }
            }
        }
    }
    let first = violations.first().cloned().unwrap_or_default();
    outcome(
        violations.is_empty(),
        format!("{} violations in {checks} ordered pairs {first}", violations.len()),
    )
}

fn inverse_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut over, mut worst_ulps) = (0.0f64, 0usize, 0.0f64);
    for i in 0..10_000 {
        let head = random_head(&mut rng, BasisKind::ALL[i % 3]);
        let p = head.constrain(&random_raw(&mut rng, head.raw_len())).unwrap();
        let a: f64 = rng.gen();
        let q = p.quantile(a).unwrap();
        let err = (p.cdf(q) - a).abs();
        worst = worst.max(err);
        if err >= 1e-8 {
            over += 1;
            // cdf change across one ulp of q: the best any f64 quantile can do
            let step = (p.cdf(q.next_up()) - p.cdf(q))
                .abs()
                .max((p.cdf(q) - p.cdf(q.next_down())).abs());
            worst_ulps = worst_ulps.max(err / step);
        }
    }
    outcome(
        worst < 1e-8,
        format!(
            "max |cdf(q(a)) - a| = {worst:.2e} over 10000 draws (limit 1e-8), {over} draws at or above the limit; \
             worst of those in one-ulp cdf steps {worst_ulps:.2}"
        ),
    )
}

fn gradient_oracle() -> Outcome {
    let errors: Vec<(String, f64)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let p = common::grad_problem(Mode::ALL[(i % 3) as usize], 1000 + i);
            let e = common::gradient_error(&p.model, &p.xs, &p.ys, &p.levels, 1e-5);
            (p.model.plan.label(), e)
        })
        .collect();
    let (plan, worst) = errors.iter().fold(
        (String::new(), 0.0),
        |acc, (p, e)| if *e > acc.1 { (p.clone(), *e) } else { acc },
    );
    outcome(
        worst < 1e-4,
        format!("max relative error {worst:.2e} ({plan}) over 100 configurations (limit 1e-4)"),
    )
}

fn crps_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_rel = 0.0f64;
    for m in 2..=64 {
        for _ in 0..50 {
            let y: f64 = rng.gen_range(-10.0..10.0);
            let c: f64 = rng.gen_range(-10.0..10.0);
            let est = crps_estimate(y, |_| c, m, GridMode::Midpoint, 0).unwrap();
            worst_rel = worst_rel.max((est - (y - c).abs()).abs() / (y - c).abs().max(f64::MIN_POSITIVE));
        }
    }
    let midpoint_ok = worst_rel <= 1e-13;
    let mut worst_z = 0.0f64;
    for (y, c, m) in [(0.3, -1.2, 8), (2.0, 2.5, 16), (-4.0, 1.0, 3), (0.0, 0.7, 64)] {
        let est: Vec<f64> = (0..1000u64)
            .map(|s| crps_estimate(y, |_| c, m, GridMode::Stratified, s).unwrap())
            .collect();
        let mean = est.iter().sum::<f64>() / 1000.0;
        let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
        worst_z = worst_z.max((mean - (y - c).abs()).abs() / (sd / 1000f64.sqrt()));
    }
    outcome(
        midpoint_ok && worst_z <= 3.0,
        format!("midpoint max relative error {worst_rel:.1e} (m = 2..64); stratified worst |bias| = {worst_z:.2} SE over 1000 seeds (limit 3)"),
    )
}

/// Statistics for a constant feature column and the given targets.
fn featureless_stats(ys: &[f64]) -> NormStats {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    NormStats {
        feature_mean: vec![0.0],
        feature_std: vec![1.0],
        target_mean: mean,
        target_std: std,
    }
}

fn distribution_recovery() -> Outcome {
    let raw = uniform_featureless(2000, 5).unwrap();
    let data = Dataset::new(Matrix::zeros(raw.n(), 1), raw.targets.clone(), vec!["one".into()], "y").unwrap();
    let stats = featureless_stats(&data.targets);
    let train = data.zscore(&stats).unwrap();
    let plans = ["nss-sum", "c-spline", "p-spline"];
    let errors: Vec<f64> = plans
        .par_iter()
        .map(|name| {
            let plan = CompositionPlan::parse(name, 32, 0.5).unwrap();
            let model = QuantileModel::new(plan, stats.clone(), &NetworkOptions::default(), 0).unwrap();
            let m = fit(model, &train, None, &TrainConfig::default())
                .unwrap()
                .into_result()
                .unwrap()
                .model;
            levels_99()
                .iter()
                .map(|&a| (m.quantile(&[0.0], a).unwrap() - a).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    outcome(
        errors[0] <= 0.05,
        format!(
            "max |q(a) - a| over 99 levels: nss-sum {:.4} (gated, limit 0.05); c-spline {:.4}, p-spline {:.4}",
            errors[0], errors[1], errors[2]
        ),
    )
}

fn synthetic_calibration() -> Outcome {
    let data = synth_regression(2000, 7).unwrap();
    let (splits, stats) = split_dataset(&data, [0.8, 0.1, 0.1], 0, false)
        .unwrap()
        .normalized()
        .unwrap();
    let variants = ["nss-sum", "nss-alpha-chain"];
    let worst: Vec<f64> = variants
        .par_iter()
        .map(|name| {
            let plan = CompositionPlan::parse(name, 32, 0.5).unwrap();
            let model = QuantileModel::new(plan, stats.clone(), &NetworkOptions::default(), 0).unwrap();
            let m = fit(model, &splits.train, Some(&splits.val), &TrainConfig::default())
                .unwrap()
                .into_result()
                .unwrap()
                .model;
            [0.5, 1.0, 1.5]
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let s = synth_slice(x, 5000, 99 + i as u64).unwrap();
                    calibration_curve(&m, &s.features, &s.targets, &deciles(), format!("x={x}"))
                        .unwrap()
                        .max_deviation()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let best = worst.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        best <= 0.07,
        format!(
            "max decile deviation at x in {{0.5, 1, 1.5}}: nss-sum {:.4}, nss-alpha-chain {:.4} (limit 0.07 for one variant)",
            worst[0], worst[1]
        ),
    )
}

/// Best validation avg-pinball-99 (standardized units) over `plans`, each
/// trained with its own initialization seed.
fn best_val_pinball(plans: &[(CompositionPlan, u64)], splits: &nss::data::Splits, stats: &NormStats) -> f64 {
    plans
        .iter()
        .map(|(plan, init)| {
            let model = QuantileModel::new(plan.clone(), stats.clone(), &NetworkOptions::default(), *init).unwrap();
            let cfg = TrainConfig {
                patience: Some(10),
                seed: *init,
                ..TrainConfig::default()
            };
            let m = fit(model, &splits.train, Some(&splits.val), &cfg)
                .unwrap()
                .into_result()
                .unwrap()
                .model;
            evaluate(&Normalized(&m), &splits.val, &[]).unwrap().avg_pinball_99
        })
        .fold(f64::INFINITY, f64::min)
}

fn composition_benefit() -> Outcome {
    let rows: Vec<(f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let data = bimodal_mixture(2000, seed).unwrap();
            let (splits, stats) = split_dataset(&data, [0.8, 0.1, 0.1], seed, false)
                .unwrap()
                .normalized()
                .unwrap();
            let c = StageSpec::new(BasisKind::CSpline, 32);
            let p = StageSpec::new(BasisKind::PSpline, 32);
            let sum: Vec<_> = [0.1, 0.5, 0.9]
                .iter()
                .map(|&l| (CompositionPlan::sum(vec![c, p], l), seed))
                .collect();
            let single: Vec<_> = (0..3)
                .map(|k| (CompositionPlan::single(BasisKind::CSpline, 32), seed + 100 * k))
                .collect();
            (
                best_val_pinball(&sum, &splits, &stats),
                best_val_pinball(&single, &splits, &stats),
            )
        })
        .collect();
    let wins = rows.iter().filter(|(s, c)| s <= c).count();
    let detail: Vec<String> = rows.iter().map(|(s, c)| format!("{s:.4}/{c:.4}")).collect();
    outcome(
        wins >= 7,
        format!(
            "nss-sum <= c-spline in {wins}/10 seeds (need 7); sum/c per seed: {}",
            detail.join(" ")
        ),
    )
}

fn run_cli_search(out: &std::path::Path) -> Vec<u8> {
    let o = out.to_str().unwrap();
    let args = |extra: &[&str]| {
        let mut v: Vec<String> = ["nss", "--out", o, "--seed", "11"].map(String::from).to_vec();
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    assert_eq!(nss::cli::run(args(&["synth", "--kind", "bimodal", "--n", "400"])), 0);
    let data = out.join("synth.csv");
    let code = nss::cli::run(args(&[
        "search",
        "--data",
        data.to_str().unwrap(),
        "--knots",
        "8",
        "--hidden",
        "8",
        "--epochs",
        "3",
    ]));
    assert_eq!(code, 0);
    std::fs::read(out.join("leaderboard.csv")).unwrap()
}

/// Bimodal c-spline law whose lower edge follows `x`.
fn generating_law(x: f64) -> CSplineParams {
    CSplineParams::new(x, vec![0.5, 1.5, 1.5, 0.5], vec![0.45, 0.05, 0.05, 0.45]).unwrap()
}

fn self_consistency_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen_range(-1.0..1.0);
        xs.push(vec![x]);
        ys.push(generating_law(x).quantile(rng.gen()).unwrap());
    }
    Dataset::new(Matrix::from_rows(&xs), ys, vec!["x".into()], "y").unwrap()
}

fn search_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let identical = run_cli_search(&a) == run_cli_search(&b);

    let generator = CompositionPlan::single(BasisKind::CSpline, 4);
    let space = vec![
        generator.clone(),
        CompositionPlan::single(BasisKind::PSpline, 4),
        CompositionPlan::single(BasisKind::Gaussian, 0),
    ];
    let winners: Vec<String> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let data = self_consistency_data(2000, seed);
            let (splits, _) = split_dataset(&data, [0.8, 0.1, 0.1], seed, false)
                .unwrap()
                .normalized()
                .unwrap();
            let cfg = SearchConfig {
                space: CandidateSpace::Explicit(space.clone()),
                train: TrainConfig {
                    patience: Some(10),
                    ..TrainConfig::default()
                },
                seed,
                parallel: false,
                ..SearchConfig::default()
            };
            search(&cfg, &splits.train, &splits.val)
                .unwrap()
                .best_entry()
                .plan
                .label()
        })
        .collect();
    let hits = winners.iter().filter(|w| **w == generator.label()).count();
    outcome(
        identical && hits >= 7,
        format!(
            "leaderboard byte-identical across runs: {identical}; generating plan ranked first in {hits}/10 seeds (need 7); winners: {}",
            winners.join(" ")
        ),
    )
}

fn uci_sanity() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/boston_housing.csv");
    let data = load_csv(path, "MEDV", &CsvOptions::default()).unwrap();
    let rows: Vec<(f64, f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let (splits, stats) = split_dataset(&data, [0.8, 0.1, 0.1], seed, false)
                .unwrap()
                .normalized()
                .unwrap();
            let plan = CompositionPlan::parse("nss-sum", 32, 0.5).unwrap();
            let model = QuantileModel::new(plan, stats, &NetworkOptions::default(), seed).unwrap();
            let cfg = TrainConfig {
                patience: Some(10),
                seed,
                ..TrainConfig::default()
            };
            let m = fit(model, &splits.train, Some(&splits.val), &cfg)
                .unwrap()
                .into_result()
                .unwrap()
                .model;
            let nss = evaluate(&Normalized(&m), &splits.test, &[]).unwrap();
            let mut sorted = splits.train.targets.clone();
            sorted.sort_by(f64::total_cmp);
            let median = common::empirical_quantile(&sorted, 0.5);
            let baseline = evaluate(&FnQuantile(|_: &[f64], _| median), &splits.test, &[]).unwrap();
            (nss.avg_pinball_99, nss.point.mae, baseline.point.mae)
        })
        .collect();
    let n = rows.len() as f64;
    let pinball = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let mae = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let base = rows.iter().map(|r| r.2).sum::<f64>() / n;
    let reference = 0.0265;
    let ratio = pinball / reference;
    let range: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.0)).collect();
    outcome(
        (0.01..=0.1).contains(&pinball) && mae < base,
        format!(
            "mean over 10 splits: avg pinball 99 {pinball:.4} (range 0.01..0.1), Q50 MAE {mae:.3} vs baseline {base:.3}; \
             {ratio:.2}x the 0.0265 reference (not gated); per split: {}",
            range.join(" ")
        ),
    )
}

fn forecast_coverage() -> Outcome {
    let per_seed: Vec<(usize, usize, usize)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let s = ar_seasonal(6500, 0.6, 12.0, 1.0, 0.5, seed).unwrap();
            let spec = SeriesSpec {
                lag: 28,
                covariates: s.covariate_names.clone(),
                ..SeriesSpec::default()
            };
            let (train_end, val_end, test_end) = (5400, 6000, 6500);
            let mut train = lagged_dataset(&s.values[..train_end], &s.covariates[..train_end], &spec).unwrap();
            train.split = SplitTag::Train;
            let stats = NormStats::fit(&train).unwrap();
            let train = train.zscore(&stats).unwrap();
            let lo = train_end - spec.lag;
            let mut val = lagged_dataset(&s.values[lo..val_end], &s.covariates[lo..val_end], &spec).unwrap();
            val.split = SplitTag::Val;
            let val = val.zscore(&stats).unwrap();
            let plan = CompositionPlan::parse("nss-sum", 32, 0.5).unwrap();
            let model = QuantileModel::new(plan, stats, &NetworkOptions::default(), seed).unwrap();
            let cfg = TrainConfig {
                patience: Some(10),
                seed,
                ..TrainConfig::default()
            };
            let model = fit(model, &train, Some(&val), &cfg)
                .unwrap()
                .into_result()
                .unwrap()
                .model;
            let f = one_step(
                &model,
                &s.values[..test_end],
                &s.covariates[..test_end],
                val_end,
                &spec,
                &[0.1, 0.9],
            )
            .unwrap();
            let truth = &s.values[val_end..test_end];
            let below = |j: usize| f.quantiles.iter().zip(truth).filter(|(q, y)| **y <= q[j]).count();
            (below(0), below(1), truth.len())
        })
        .collect();
    let total: usize = per_seed.iter().map(|r| r.2).sum();
    let q10 = per_seed.iter().map(|r| r.0).sum::<usize>() as f64 / total as f64;
    let q90 = per_seed.iter().map(|r| r.1).sum::<usize>() as f64 / total as f64;
    let each: Vec<String> = per_seed
        .iter()
        .map(|r| format!("{:.3}/{:.3}", r.0 as f64 / r.2 as f64, r.1 as f64 / r.2 as f64))
        .collect();
    outcome(
        (q10 - 0.1).abs() <= 0.05 && (q90 - 0.9).abs() <= 0.05,
        format!(
            "pooled one-step coverage over 5 x 500 steps: Q10 {q10:.3}, Q90 {q90:.3} (limit +-0.05); per seed {}",
            each.join(" ")
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: [(usize, &str, Check, Option<Duration>); 10] = [
        (1, "monotonicity", monotonicity, secs(30)),
        (2, "inverse consistency", inverse_consistency, secs(10)),
        (3, "gradient oracle", gradient_oracle, secs(120)),
        (4, "crps oracle", crps_oracle, None),
        (5, "distribution recovery", distribution_recovery, secs(120)),
        (6, "synthetic calibration", synthetic_calibration, secs(300)),
        (7, "composition benefit", composition_benefit, None),
        (8, "search determinism", search_determinism, None),
        (9, "uci magnitude", uci_sanity, None),
        (10, "forecast coverage", forecast_coverage, secs(300)),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let pass = within(o.pass, elapsed, budget);
        let limit = budget.map(|b| format!(", limit {}s", b.as_secs())).unwrap_or_default();
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1}s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
        if !pass && !KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
