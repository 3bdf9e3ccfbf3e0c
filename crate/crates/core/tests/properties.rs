mod common;

use nss::composition::{Mode, QuantileModel};
use nss::data::archive::{decode_model, encode_model};
use nss::data::{one_step, rollout, split_dataset, Dataset, Fingerprint, NormStats, SeriesSpec, SplitTag};
use nss::neural::{HeadSpec, Matrix};
use nss::spline::{BasisKind, BasisParams, GaussianParams, PSplineParams};
use nss::training::{crps_estimate, grid_levels, GridMode};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind() -> impl Strategy<Value = BasisKind> {
    prop_oneof![
        Just(BasisKind::CSpline),
        Just(BasisKind::PSpline),
        Just(BasisKind::Gaussian)
    ]
}

fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Sum), Just(Mode::AlphaChain), Just(Mode::XChain)]
}

/// Head spec plus raw outputs of matching length.
fn head_and_raw(limit: f64) -> impl Strategy<Value = (HeadSpec, Vec<f64>)> {
    (kind(), 1usize..24, 0.5f64..8.0).prop_flat_map(move |(k, knots, span)| {
        let head = HeadSpec { kind: k, knots, span };
        (Just(head), prop::collection::vec(-limit..limit, head.raw_len()))
    })
}

fn model_for(m: Mode, seed: u64, scale: f64) -> (QuantileModel, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = common::random_plan(m, &mut rng);
    let d = 2;
    let model = common::random_model(plan, d, scale, &mut rng);
    let xs = common::random_inputs(4, d, &mut rng);
    (model, xs)
}

proptest! {
    #[test]
    fn constrain_is_total((head, raw) in head_and_raw(1e9)) {
        prop_assert!(head.constrain(&raw).is_ok());
    }

    #[test]
    fn basis_quantiles_are_monotone((head, raw) in head_and_raw(8.0), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let p = head.constrain(&raw).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (qa, qb) = if p.kind() == BasisKind::Gaussian && (lo == 0.0 || hi == 1.0) {
            return Ok(());
        } else {
            (p.quantile(lo).unwrap(), p.quantile(hi).unwrap())
        };
        prop_assert!(qa <= qb, "q({lo}) = {qa} > q({hi}) = {qb}");
    }

    #[test]
    fn cdf_inverts_quantile((head, raw) in head_and_raw(8.0), a in 1e-6f64..(1.0 - 1e-6)) {
        let p = head.constrain(&raw).unwrap();
        let back = p.cdf(p.quantile(a).unwrap());
        prop_assert!((back - a).abs() < 1e-8, "cdf(q({a})) = {back}");
    }

    #[test]
    fn cdf_clamps_outside_support((head, raw) in head_and_raw(8.0)) {
        let p = head.constrain(&raw).unwrap();
        if p.kind() != BasisKind::Gaussian {
            prop_assert_eq!(p.cdf(p.lower() - 1.0), 0.0);
            prop_assert_eq!(p.cdf(p.upper() + 1.0), 1.0);
        }
    }

    #[test]
    fn pspline_normalization_gives_unit_mass(
        gaps in prop::collection::vec(1e-3f64..5.0, 1..20),
        start in -10.0f64..10.0,
        seed_dens in prop::collection::vec(1e-3f64..50.0, 21),
    ) {
        let mut knots = vec![start];
        for g in &gaps {
            knots.push(knots.last().unwrap() + g);
        }
        let dens = seed_dens[..knots.len()].to_vec();
        let p = PSplineParams::normalized(knots, dens).unwrap();
        prop_assert!((p.mass() - 1.0).abs() < 1e-12);
        // rebuilding through the strict constructor accepts the result
        let v = BasisParams::PSpline(p.clone()).to_vec();
        let n = p.knots().len();
        prop_assert!(PSplineParams::new(v[..n].to_vec(), v[n..].to_vec()).is_ok());
    }

    #[test]
    fn gaussian_is_symmetric(mu in -50.0f64..50.0, sigma in 1e-3f64..20.0, a in 1e-6f64..0.5) {
        let g = GaussianParams::new(mu, sigma).unwrap();
        let s = g.quantile(a).unwrap() + g.quantile(1.0 - a).unwrap();
        prop_assert!((s - 2.0 * mu).abs() < 1e-9 * (1.0 + mu.abs() + sigma));
    }

    #[test]
    fn compositions_never_cross(m in mode(), seed in any::<u64>(), scale in 0.0f64..3.0) {
        let (model, xs) = model_for(m, seed, scale);
        let levels: Vec<f64> = (1..40).map(|i| i as f64 / 40.0).collect();
        let q = model.quantiles_normalized(&xs, &levels).unwrap();
        for r in 0..xs.rows {
            for w in q.row(r).windows(2) {
                prop_assert!(w[0] <= w[1], "{} at row {r}: {} > {}", model.plan, w[0], w[1]);
            }
        }
    }

    #[test]
    fn stratified_constant_predictor_is_exact_in_expectation_form(
        y in -5.0f64..5.0, c in -5.0f64..5.0, m in 2usize..64, seed in any::<u64>()
    ) {
        // a point predictor's pinball loss is linear in the level, so the
        // estimate equals the grid mean of the levels times 2|y - c|
        let est = crps_estimate(y, |_| c, m, GridMode::Stratified, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = grid_levels(m, GridMode::Stratified, &mut rng);
        let mean_a = grid.iter().sum::<f64>() / m as f64;
        let side = if y >= c { mean_a } else { 1.0 - mean_a };
        prop_assert!((est - 2.0 * (y - c).abs() * side).abs() < 1e-12 * (1.0 + (y - c).abs()));
    }

    #[test]
    fn midpoint_constant_predictor_is_exact(y in -50.0f64..50.0, c in -50.0f64..50.0, m in 2usize..200) {
        let est = crps_estimate(y, |_| c, m, GridMode::Midpoint, 0).unwrap();
        prop_assert!((est - (y - c).abs()).abs() <= 1e-12 * (1.0 + (y - c).abs()));
    }

    #[test]
    fn zscore_round_trips(values in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40)) {
        let rows: Vec<Vec<f64>> = values.iter().map(|&(a, _)| vec![a]).collect();
        let ys: Vec<f64> = values.iter().map(|&(_, b)| b).collect();
        let mut d = Dataset::new(Matrix::from_rows(&rows), ys, vec!["a".into()], "y").unwrap();
        d.split = SplitTag::Train;
        let Ok(stats) = NormStats::fit(&d) else { return Ok(()) };
        let back = d.zscore(&stats).unwrap().denormalized();
        for (u, v) in back.targets.iter().zip(&d.targets) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
        for (u, v) in back.features.data.iter().zip(&d.features.data) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn splits_partition_and_repeat(n in 3usize..200, seed in any::<u64>(), chrono in any::<bool>()) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let d = Dataset::new(Matrix::from_rows(&rows), vec![0.0; n], vec!["i".into()], "y").unwrap();
        let Ok(a) = split_dataset(&d, [0.8, 0.1, 0.1], seed, chrono) else { return Ok(()) };
        let b = split_dataset(&d, [0.8, 0.1, 0.1], seed, chrono).unwrap();
        prop_assert_eq!(&a, &b);
        let ids = |s: &Dataset| s.features.data.clone();
        let mut all: Vec<f64> = [ids(&a.train), ids(&a.val), ids(&a.test)].concat();
        all.sort_by(f64::total_cmp);
        prop_assert_eq!(all, (0..n).map(|i| i as f64).collect::<Vec<_>>());
        if chrono {
            let max_train = ids(&a.train).into_iter().fold(f64::MIN, f64::max);
            let min_val = ids(&a.val).into_iter().fold(f64::MAX, f64::min);
            prop_assert!(max_train < min_val);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradients_match_finite_differences(m in mode(), seed in any::<u64>()) {
        let p = common::grad_problem(m, seed);
        let err = common::gradient_error(&p.model, &p.xs, &p.ys, &p.levels, 1e-5);
        prop_assert!(err < 1e-4, "{}: relative error {err:e}", p.model.plan);
    }

    #[test]
    fn archives_round_trip_bitwise(m in mode(), seed in any::<u64>()) {
        let (model, xs) = model_for(m, seed, 1.0);
        let fp = Fingerprint { config_hash: format!("{seed:x}"), seed };
        let (back, fp2) = decode_model(&encode_model(&model, &fp).unwrap()).unwrap();
        prop_assert_eq!(fp, fp2);
        let levels = [0.01, 0.3, 0.5, 0.77, 0.99];
        let a = model.quantiles(&xs, &levels).unwrap();
        let b = back.quantiles(&xs, &levels).unwrap();
        prop_assert!(a.data.iter().zip(&b.data).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn forecasts_are_ordered_and_rollout_of_one_is_one_step(seed in any::<u64>(), lag in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = common::random_plan(Mode::Sum, &mut rng);
        let model = common::random_model(plan, lag, 1.0, &mut rng);
        let series: Vec<f64> = common::random_inputs(lag + 5, 1, &mut rng).data;
        let spec = SeriesSpec { lag, ..SeriesSpec::default() };
        let levels = [0.1, 0.5, 0.9];
        let cov = vec![Vec::new(); series.len()];
        let f = one_step(&model, &series, &cov, lag, &spec, &levels).unwrap();
        for q in &f.quantiles {
            prop_assert!(q[0] <= q[1] && q[1] <= q[2]);
        }
        let r = rollout(&model, &series[..lag], &[Vec::new()], &spec, &levels).unwrap();
        prop_assert_eq!(&r.quantiles[0], &f.quantiles[0]);
    }
}
