//! A composition plan bound to one parameter network per stage.
//!
//! All internal evaluation happens in standardized units; the public
//! `quantile*` methods take raw features and return raw target values.

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::neural::head::sigmoid;
use crate::neural::{Activation, HeadSpec, Matrix, NetworkGrads, NetworkSpec, NetworkState, DEFAULT_SPAN};
use crate::spline::{check_level, BasisParams};

use super::plan::{CompositionPlan, Mode, Normalizer, DEFAULT_MAX_DEPTH};

/// Smallest admissible `q(1) - q(0)` for alpha-chain normalization.
pub const MIN_RANGE: f64 = 1e-9;

/// Architecture shared by every stage network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkOptions {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Support window of a zero-output spline head (standardized units).
    pub span: f64,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            span: DEFAULT_SPAN,
        }
    }
}

/// Levels to evaluate for each row: one shared list or one list per row.
#[derive(Debug, Clone, PartialEq)]
pub enum Levels {
    Shared(Vec<f64>),
    PerRow(Vec<Vec<f64>>),
}

impl Levels {
    pub fn get(&self, row: usize) -> &[f64] {
        match self {
            Levels::Shared(v) => v,
            Levels::PerRow(v) => &v[row],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileModel {
    pub plan: CompositionPlan,
    pub networks: Vec<NetworkState>,
    pub stats: NormStats,
}

impl QuantileModel {
    /// Fresh networks for `plan`, seeded per stage index.
    pub fn new(plan: CompositionPlan, stats: NormStats, options: &NetworkOptions, seed: u64) -> Result<Self> {
        plan.validate(DEFAULT_MAX_DEPTH.max(plan.depth()))?;
        let d = stats.feature_mean.len();
        // a sum of zero-output stages should still cover `span` overall
        let span = match plan.mode {
            Mode::Sum => options.span / (1.0 + plan.lambda * (plan.depth() - 1) as f64),
            _ => options.span,
        };
        let networks = plan
            .stages
            .iter()
            .enumerate()
            .map(|(s, stage)| {
                let mut head = HeadSpec::new(stage.kind, stage.knots);
                head.span = span;
                let chained_input = plan.mode == Mode::XChain && s > 0;
                let mut spec = NetworkSpec::new(if chained_input { 1 } else { d }, options.hidden.clone(), head);
                spec.activation = options.activation;
                spec.monotone = chained_input;
                NetworkState::init(spec, seed, s as u64)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(plan, networks, stats)
    }

    pub fn from_parts(plan: CompositionPlan, networks: Vec<NetworkState>, stats: NormStats) -> Result<Self> {
        plan.validate(DEFAULT_MAX_DEPTH.max(plan.depth()))?;
        if networks.len() != plan.depth() {
            return Err(Error::Contract(format!(
                "plan has {} stages but {} networks were given",
                plan.depth(),
                networks.len()
            )));
        }
        let d = stats.feature_mean.len();
        for (s, (net, stage)) in networks.iter().zip(&plan.stages).enumerate() {
            let want = if plan.mode == Mode::XChain && s > 0 { 1 } else { d };
            if net.spec.input != want {
                return Err(Error::Contract(format!(
                    "stage {s} network takes {} inputs, expected {want}",
                    net.spec.input
                )));
            }
            if net.spec.head.kind != stage.kind || net.spec.head.knots != stage.knots {
                return Err(Error::Contract(format!(
                    "stage {s} network head does not match the plan"
                )));
            }
            if plan.mode == Mode::XChain && s > 0 && !net.spec.monotone {
                return Err(Error::Contract(format!(
                    "x-chain stage {s} needs a monotone network to keep quantiles ordered"
                )));
            }
        }
        Ok(Self { plan, networks, stats })
    }

    pub fn input_dim(&self) -> usize {
        self.stats.feature_mean.len()
    }

    pub fn param_count(&self) -> usize {
        self.networks.iter().map(NetworkState::param_count).sum()
    }

    fn coefficient(&self, stage: usize) -> f64 {
        if stage == 0 {
            1.0
        } else {
            self.plan.lambda
        }
    }

    fn constrain_rows(&self, stage: usize, raw: &Matrix) -> Result<Vec<BasisParams>> {
        let head = &self.networks[stage].spec.head;
        (0..raw.rows).map(|r| head.constrain(raw.row(r))).collect()
    }

    /// Basis parameters of every stage at one standardized input.
    ///
    /// Only meaningful for sum and alpha-chain plans (x-chain stages past the
    /// first depend on the level).
    pub fn stage_params(&self, x: &[f64]) -> Result<Vec<BasisParams>> {
        let xm = Matrix {
            rows: 1,
            cols: x.len(),
            data: x.to_vec(),
        };
        let mut out = Vec::with_capacity(self.plan.depth());
        for (s, net) in self.networks.iter().enumerate() {
            let input = if self.plan.mode == Mode::XChain && s > 0 {
                return Err(Error::Contract("x-chain stage parameters depend on the level".into()));
            } else {
                &xm
            };
            let (raw, _) = net.forward(input)?;
            out.extend(self.constrain_rows(s, &raw)?);
        }
        Ok(out)
    }

    /// Quantiles at standardized inputs, in standardized target units.
    /// Returns one row per input and one column per level.
    pub fn quantiles_normalized(&self, xs: &Matrix, levels: &[f64]) -> Result<Matrix> {
        let mut out = Matrix::zeros(xs.rows, levels.len());
        self.run(xs, &Levels::Shared(levels.to_vec()), false, |r, i, _, q| {
            out.data[r * levels.len() + i] = q;
            Ok((0.0, 0.0))
        })?;
        Ok(out)
    }

    /// Quantiles at raw inputs, in raw target units.
    pub fn quantiles(&self, xs: &Matrix, levels: &[f64]) -> Result<Matrix> {
        let mut q = self.quantiles_normalized(&self.stats.features_matrix(xs), levels)?;
        for v in &mut q.data {
            *v = self.stats.target_inverse(*v);
        }
        Ok(q)
    }

    /// Single raw-unit quantile.
    pub fn quantile(&self, x: &[f64], alpha: f64) -> Result<f64> {
        let xs = Matrix {
            rows: 1,
            cols: x.len(),
            data: x.to_vec(),
        };
        Ok(self.quantiles(&xs, &[alpha])?.data[0])
    }

    /// Sums a per-point loss over every (row, level) and, when asked,
    /// backpropagates it to every network.
    ///
    /// `loss(row, level_index, level, q)` returns the loss contribution and
    /// its derivative with respect to `q` (standardized units).
    pub fn loss_and_grad<F>(&self, xs: &Matrix, levels: &Levels, loss: F) -> Result<(f64, Vec<NetworkGrads>)>
    where
        F: FnMut(usize, usize, f64, f64) -> Result<(f64, f64)>,
    {
        let (total, grads) = self.run(xs, levels, true, loss)?;
        Ok((total, grads.expect("gradients requested")))
    }

    fn run<F>(&self, xs: &Matrix, levels: &Levels, want_grad: bool, loss: F) -> Result<(f64, Option<Vec<NetworkGrads>>)>
    where
        F: FnMut(usize, usize, f64, f64) -> Result<(f64, f64)>,
    {
        for r in 0..xs.rows {
            for &a in levels.get(r) {
                check_level(a)?;
            }
        }
        match self.plan.mode {
            Mode::XChain if self.plan.depth() > 1 => self.run_x_chain(xs, levels, want_grad, loss),
            _ => self.run_shared_input(xs, levels, want_grad, loss),
        }
    }

    /// Sum and alpha-chain: every stage sees the original features.
    fn run_shared_input<F>(
        &self,
        xs: &Matrix,
        levels: &Levels,
        want_grad: bool,
        mut loss: F,
    ) -> Result<(f64, Option<Vec<NetworkGrads>>)>
    where
        F: FnMut(usize, usize, f64, f64) -> Result<(f64, f64)>,
    {
        let depth = self.plan.depth();
        let mut tapes = Vec::with_capacity(depth);
        let mut raws = Vec::with_capacity(depth);
        let mut params = Vec::with_capacity(depth);
        for (s, net) in self.networks.iter().enumerate() {
            let (raw, tape) = net.forward(xs)?;
            params.push(self.constrain_rows(s, &raw)?);
            raws.push(raw);
            tapes.push(tape);
        }
        let mut grad_params: Vec<Matrix> = params
            .iter()
            .map(|p| Matrix::zeros(xs.rows, p.first().map_or(0, BasisParams::param_count)))
            .collect();
        let mut buf: Vec<Vec<f64>> = grad_params.iter().map(|g| vec![0.0; g.cols]).collect();
        let mut aux = buf.clone();

        let mut total = 0.0;
        let mut stage_levels = vec![0.0; depth];
        let mut stage_out = vec![0.0; depth];
        for r in 0..xs.rows {
            for (i, &alpha) in levels.get(r).iter().enumerate() {
                let q = match self.plan.mode {
                    Mode::Sum | Mode::XChain => {
                        let mut q = 0.0;
                        for (s, p) in params.iter().enumerate() {
                            q += self.coefficient(s) * p[r].quantile(alpha)?;
                        }
                        q
                    }
                    Mode::AlphaChain => {
                        let mut a = alpha;
                        for s in 0..depth {
                            let p = &params[s][r];
                            stage_levels[s] = a;
                            let y = p.quantile(a)?;
                            stage_out[s] = y;
                            if s + 1 < depth {
                                a = self.normalize(s, p, y)?;
                            }
                        }
                        stage_out[depth - 1]
                    }
                };
                let (l, g) = loss(r, i, alpha, q)?;
                total += l;
                if !want_grad || g == 0.0 {
                    continue;
                }
                match self.plan.mode {
                    Mode::Sum | Mode::XChain => {
                        for s in 0..depth {
                            let c = self.coefficient(s);
                            if c == 0.0 {
                                continue;
                            }
                            params[s][r].grad_into(alpha, &mut buf[s]);
                            for (acc, b) in grad_params[s].row_mut(r).iter_mut().zip(&buf[s]) {
                                *acc += g * c * b;
                            }
                        }
                    }
                    Mode::AlphaChain => {
                        let mut gy = g;
                        for s in (0..depth).rev() {
                            let p = &params[s][r];
                            let d_alpha = p.grad_into(stage_levels[s], &mut buf[s]);
                            for (acc, b) in grad_params[s].row_mut(r).iter_mut().zip(&buf[s]) {
                                *acc += gy * b;
                            }
                            if s == 0 {
                                break;
                            }
                            let ga = gy * d_alpha;
                            let prev = &params[s - 1][r];
                            let y = stage_out[s - 1];
                            gy = match self.plan.normalizer {
                                Normalizer::MinMax => {
                                    let (lo, hi) = (prev.lower(), prev.upper());
                                    let range = hi - lo;
                                    let g_lo = ga * (y - hi) / (range * range);
                                    let g_hi = -ga * (y - lo) / (range * range);
                                    prev.lower_grad(&mut aux[s - 1]);
                                    for (acc, b) in grad_params[s - 1].row_mut(r).iter_mut().zip(&aux[s - 1]) {
                                        *acc += g_lo * b;
                                    }
                                    prev.upper_grad(&mut aux[s - 1]);
                                    for (acc, b) in grad_params[s - 1].row_mut(r).iter_mut().zip(&aux[s - 1]) {
                                        *acc += g_hi * b;
                                    }
                                    ga / range
                                }
                                Normalizer::Sigmoid => {
                                    let a = stage_levels[s];
                                    ga * a * (1.0 - a)
                                }
                            };
                        }
                    }
                }
            }
        }
        if !want_grad {
            return Ok((total, None));
        }
        let mut grads = Vec::with_capacity(depth);
        for (s, tape) in tapes.into_iter().enumerate() {
            let upstream = self.head_backward(s, &raws[s], &params[s], &grad_params[s]);
            let (g, _) = self.networks[s].backward(tape, &upstream)?;
            grads.push(g);
        }
        Ok((total, Some(grads)))
    }

    /// Alpha-chain map from a stage output to the next level.
    fn normalize(&self, stage: usize, p: &BasisParams, y: f64) -> Result<f64> {
        match self.plan.normalizer {
            Normalizer::MinMax => {
                let (lo, hi) = (p.lower(), p.upper());
                let range = hi - lo;
                if !(range >= MIN_RANGE) {
                    return Err(Error::DegenerateRange { stage, range });
                }
                Ok(((y - lo) / range).clamp(0.0, 1.0))
            }
            Normalizer::Sigmoid => Ok(sigmoid(y)),
        }
    }

    fn head_backward(&self, stage: usize, raw: &Matrix, params: &[BasisParams], grad_params: &Matrix) -> Matrix {
        let head = &self.networks[stage].spec.head;
        let mut upstream = Matrix::zeros(raw.rows, raw.cols);
        for r in 0..raw.rows {
            let gp = grad_params.row(r);
            if gp.iter().all(|&g| g == 0.0) {
                continue;
            }
            head.backward(raw.row(r), &params[r], gp, upstream.row_mut(r));
        }
        upstream
    }

    /// X-chain: stage `s > 0` takes the previous stage's output as its only
    /// input, at the same level.
    fn run_x_chain<F>(
        &self,
        xs: &Matrix,
        levels: &Levels,
        want_grad: bool,
        mut loss: F,
    ) -> Result<(f64, Option<Vec<NetworkGrads>>)>
    where
        F: FnMut(usize, usize, f64, f64) -> Result<(f64, f64)>,
    {
        let depth = self.plan.depth();
        // flattened (row, level) pairs
        let mut owner = Vec::new();
        let mut alphas = Vec::new();
        for r in 0..xs.rows {
            for &a in levels.get(r) {
                owner.push(r);
                alphas.push(a);
            }
        }
        let n_pts = alphas.len();

        let (raw0, tape0) = self.networks[0].forward(xs)?;
        let params0 = self.constrain_rows(0, &raw0)?;
        let mut u = Matrix::zeros(n_pts, 1);
        for k in 0..n_pts {
            u.data[k] = params0[owner[k]].quantile(alphas[k])?;
        }

        let mut stages = Vec::with_capacity(depth - 1);
        for s in 1..depth {
            let (raw, tape) = self.networks[s].forward(&u)?;
            let params = self.constrain_rows(s, &raw)?;
            let mut next = Matrix::zeros(n_pts, 1);
            for k in 0..n_pts {
                next.data[k] = params[k].quantile(alphas[k])?;
            }
            stages.push((raw, tape, params));
            u = next;
        }

        let mut total = 0.0;
        let mut g_out = vec![0.0; n_pts];
        let mut k = 0;
        for r in 0..xs.rows {
            for (i, &a) in levels.get(r).iter().enumerate() {
                let (l, g) = loss(r, i, a, u.data[k])?;
                total += l;
                g_out[k] = g;
                k += 1;
            }
        }
        if !want_grad {
            return Ok((total, None));
        }

        let mut grads = vec![None; depth];
        let mut g_u = g_out;
        for (s, (raw, tape, params)) in stages.into_iter().enumerate().rev() {
            let s = s + 1;
            let mut grad_params = Matrix::zeros(n_pts, params[0].param_count());
            let mut buf = vec![0.0; grad_params.cols];
            for k in 0..n_pts {
                if g_u[k] == 0.0 {
                    continue;
                }
                params[k].grad_into(alphas[k], &mut buf);
                for (acc, b) in grad_params.row_mut(k).iter_mut().zip(&buf) {
                    *acc = g_u[k] * b;
                }
            }
            let upstream = self.head_backward(s, &raw, &params, &grad_params);
            let (g, dx) = self.networks[s].backward(tape, &upstream)?;
            grads[s] = Some(g);
            g_u = dx.data;
        }

        let mut grad_params = Matrix::zeros(xs.rows, params0[0].param_count());
        let mut buf = vec![0.0; grad_params.cols];
        for k in 0..n_pts {
            if g_u[k] == 0.0 {
                continue;
            }
            params0[owner[k]].grad_into(alphas[k], &mut buf);
            for (acc, b) in grad_params.row_mut(owner[k]).iter_mut().zip(&buf) {
                *acc += g_u[k] * b;
            }
        }
        let upstream = self.head_backward(0, &raw0, &params0, &grad_params);
        let (g, _) = self.networks[0].backward(tape0, &upstream)?;
        grads[0] = Some(g);
        Ok((
            total,
            Some(grads.into_iter().map(|g| g.expect("every stage visited")).collect()),
        ))
    }

    /// Smallest distance, over stages, between the level a stage sees and
    /// one of its interior knots. Used to keep derivative checks away from
    /// kinks.
    pub fn knot_margin(&self, x: &[f64], alpha: f64) -> Result<f64> {
        let xm = Matrix {
            rows: 1,
            cols: x.len(),
            data: x.to_vec(),
        };
        let mut margin = f64::INFINITY;
        match self.plan.mode {
            Mode::XChain if self.plan.depth() > 1 => {
                let mut input = xm;
                for net in &self.networks {
                    let (raw, _) = net.forward(&input)?;
                    let p = net.spec.head.constrain(raw.row(0))?;
                    margin = margin.min(p.knot_margin(alpha));
                    let y = p.quantile(alpha)?;
                    input = Matrix {
                        rows: 1,
                        cols: 1,
                        data: vec![y],
                    };
                }
            }
            _ => {
                let params = self.stage_params(x)?;
                let mut a = alpha;
                for (s, p) in params.iter().enumerate() {
                    margin = margin.min(p.knot_margin(a));
                    if self.plan.mode == Mode::AlphaChain && s + 1 < params.len() {
                        let y = p.quantile(a)?;
                        a = self.normalize(s, p, y)?;
                    }
                }
            }
        }
        Ok(margin)
    }
}
