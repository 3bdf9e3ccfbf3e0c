//! Helpers shared by the integration tests.
#![allow(dead_code)]

use nss::composition::{CompositionPlan, Levels, Mode, NetworkOptions, QuantileModel, StageSpec};
use nss::data::NormStats;
use nss::neural::{Activation, Matrix, NetworkState};
use nss::spline::BasisKind;
use nss::training::{pinball, pinball_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random plan in `mode` with 2 or 3 stages of 1 to 5 knots.
pub fn random_plan(mode: Mode, rng: &mut ChaCha8Rng) -> CompositionPlan {
    let depth = rng.gen_range(2..=3);
    let stages: Vec<StageSpec> = (0..depth)
        .map(|_| {
            let kinds: &[BasisKind] = match mode {
                // alpha-chain needs bounded stages
                Mode::AlphaChain => &[BasisKind::CSpline, BasisKind::PSpline],
                _ => &BasisKind::ALL,
            };
            let kind = kinds[rng.gen_range(0..kinds.len())];
            StageSpec::new(
                kind,
                if kind == BasisKind::Gaussian {
                    0
                } else {
                    rng.gen_range(1..=5)
                },
            )
        })
        .collect();
    match mode {
        Mode::Sum => CompositionPlan::sum(stages, rng.gen_range(0.1..2.0)),
        m => CompositionPlan::chain(m, stages),
    }
}

/// Small tanh networks with every weight and bias jittered, so no output
/// sits at its initial symmetric point.
pub fn random_model(plan: CompositionPlan, d: usize, scale: f64, rng: &mut ChaCha8Rng) -> QuantileModel {
    let opts = NetworkOptions {
        hidden: vec![5],
        activation: Activation::Tanh,
        span: 4.0,
    };
    let base = QuantileModel::new(plan.clone(), NormStats::identity(d), &opts, rng.gen()).unwrap();
    let networks = base
        .networks
        .iter()
        .map(|n| {
            let mut layers = n.layers.clone();
            for l in &mut layers {
                for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                    *v += scale * rng.gen_range(-1.0..1.0);
                }
            }
            // rebuilding re-applies the monotone projection
            NetworkState::from_layers(n.spec.clone(), layers).unwrap()
        })
        .collect();
    QuantileModel::from_parts(plan, networks, NormStats::identity(d)).unwrap()
}

pub fn random_inputs(rows: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix {
        rows,
        cols: d,
        data: (0..rows * d).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    }
}

/// Summed pinball loss of `model` on `(xs, ys)` at `levels`.
pub fn pinball_total(model: &QuantileModel, xs: &Matrix, ys: &[f64], levels: &[f64]) -> f64 {
    let q = model.quantiles_normalized(xs, levels).unwrap();
    (0..xs.rows)
        .map(|r| {
            levels
                .iter()
                .zip(q.row(r))
                .map(|(&a, &qv)| pinball(ys[r], qv, a))
                .sum::<f64>()
        })
        .sum()
}

/// Relative error `|g - g_fd| / max(|g|, |g_fd|)` (Euclidean norms) between
/// the analytic gradient and central finite differences with step `h`.
pub fn gradient_error(model: &QuantileModel, xs: &Matrix, ys: &[f64], levels: &[f64], h: f64) -> f64 {
    let (_, grads) = model
        .loss_and_grad(xs, &Levels::Shared(levels.to_vec()), |r, _, a, q| {
            Ok((pinball(ys[r], q, a), pinball_grad(ys[r], q, a)))
        })
        .unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for s in 0..model.networks.len() {
        let n = model.networks[s].param_count();
        for i in 0..n {
            let eval = |delta: f64| {
                let mut m = model.clone();
                *m.networks[s].params_mut().nth(i).unwrap() += delta;
                pinball_total(&m, xs, ys, levels)
            };
            numeric.push((eval(h) - eval(-h)) / (2.0 * h));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// A random gradient-check problem: model, inputs, targets and levels kept
/// clear of spline knots and of the pinball kink.
pub struct GradProblem {
    pub model: QuantileModel,
    pub xs: Matrix,
    pub ys: Vec<f64>,
    pub levels: Vec<f64>,
}

pub fn grad_problem(mode: Mode, seed: u64) -> GradProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=3);
    let model = random_model(random_plan(mode, &mut rng), d, 0.3, &mut rng);
    let rows = 3;
    let xs = random_inputs(rows, d, &mut rng);
    let mut levels = Vec::new();
    while levels.len() < 3 {
        let a: f64 = rng.gen_range(0.03..0.97);
        let clear = (0..rows).all(|r| model.knot_margin(xs.row(r), a).unwrap() > 1e-3);
        if clear {
            levels.push(a);
        }
    }
    let q = model.quantiles_normalized(&xs, &levels).unwrap();
    let ys = (0..rows)
        .map(|r| loop {
            let y: f64 = rng.gen_range(-4.0..4.0);
            if q.row(r).iter().all(|qv| (qv - y).abs() > 1e-3) {
                break y;
            }
        })
        .collect();
    GradProblem { model, xs, ys, levels }
}

/// Linear-interpolation empirical quantile of sorted values.
pub fn empirical_quantile(sorted: &[f64], a: f64) -> f64 {
    let pos = a * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
