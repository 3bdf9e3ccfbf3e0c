//! Output heads: map unconstrained network outputs to valid basis parameters.
//!
//! * offsets (`l0`, `z_0`, `mu`) are unconstrained, shifted so a zero output
//!   sits at the left edge of a window of width `span` centred on zero;
//! * widths, knot spacings and densities use a floored softplus;
//! * c-spline heights use a normalized exponential mixed with a tiny uniform
//!   floor, so they are strictly positive and sum to one;
//! * p-spline densities are renormalized to unit trapezoid mass.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spline::{BasisKind, BasisParams, CSplineParams, GaussianParams, PSplineParams};

/// Lower bound added to every positive map.
pub const POSITIVE_FLOOR: f64 = 1e-6;
/// Raw outputs are clipped to this magnitude before constraining.
pub const RAW_LIMIT: f64 = 1e6;
/// Default support window in normalized target units.
pub const DEFAULT_SPAN: f64 = 4.0;
const HEIGHT_FLOOR: f64 = 1e-12;

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// How raw outputs of one stage network become basis parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub kind: BasisKind,
    pub knots: usize,
    pub span: f64,
}

impl HeadSpec {
    pub fn new(kind: BasisKind, knots: usize) -> Self {
        Self {
            kind,
            knots,
            span: DEFAULT_SPAN,
        }
    }

    pub fn raw_len(&self) -> usize {
        self.kind.param_count(self.knots)
    }

    // width of one bin when its raw output is zero
    fn unit(&self) -> f64 {
        self.span / (self.knots as f64 * std::f64::consts::LN_2)
    }

    /// Raw outputs that a monotone (input-nondecreasing) network may drive.
    ///
    /// The quantile is nondecreasing in each of these parameters at every
    /// level while the others stay fixed.
    pub fn input_dependent(&self) -> Vec<bool> {
        let n = self.raw_len();
        match self.kind {
            BasisKind::CSpline => (0..n).map(|i| i <= self.knots).collect(),
            BasisKind::PSpline | BasisKind::Gaussian => (0..n).map(|i| i == 0).collect(),
        }
    }

    pub fn constrain(&self, raw: &[f64]) -> Result<BasisParams> {
        debug_assert_eq!(raw.len(), self.raw_len());
        let r = |i: usize| raw[i].clamp(-RAW_LIMIT, RAW_LIMIT);
        let k = self.knots;
        match self.kind {
            BasisKind::CSpline => {
                let offset = r(0) - 0.5 * self.span;
                let unit = self.unit();
                let widths = (1..=k).map(|i| unit * softplus(r(i)) + POSITIVE_FLOOR).collect();
                let heights = floored_softmax((k + 1..=2 * k).map(r));
                Ok(CSplineParams::new(offset, widths, heights)?.into())
            }
            BasisKind::PSpline => {
                let (knots, dens) = self.pspline_knots(raw);
                Ok(PSplineParams::normalized(knots, dens)?.into())
            }
            BasisKind::Gaussian => Ok(GaussianParams::new(r(0), softplus(r(1)) + POSITIVE_FLOOR)?.into()),
        }
    }

    fn pspline_knots(&self, raw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.knots;
        let r = |i: usize| raw[i].clamp(-RAW_LIMIT, RAW_LIMIT);
        let unit = self.unit();
        let mut knots = Vec::with_capacity(k + 1);
        let mut z = r(0) - 0.5 * self.span;
        knots.push(z);
        for i in 1..=k {
            z += unit * softplus(r(i)) + POSITIVE_FLOOR;
            knots.push(z);
        }
        let dens = (k + 1..=2 * k + 1).map(|i| softplus(r(i)) + POSITIVE_FLOOR).collect();
        (knots, dens)
    }

    /// Chain rule from basis-parameter partials to raw-output partials.
    ///
    /// `params` must be the result of `constrain(raw)`.
    pub fn backward(&self, raw: &[f64], params: &BasisParams, grad_params: &[f64], grad_raw: &mut [f64]) {
        let k = self.knots;
        let live = |i: usize| raw[i].abs() < RAW_LIMIT;
        let dsoft = |i: usize| if live(i) { sigmoid(raw[i]) } else { 0.0 };
        match params {
            BasisParams::CSpline(p) => {
                let unit = self.unit();
                grad_raw[0] = if live(0) { grad_params[0] } else { 0.0 };
                for i in 1..=k {
                    grad_raw[i] = grad_params[i] * unit * dsoft(i);
                }
                // h = (1 - K eps) softmax + eps
                let h = p.heights();
                let scale = 1.0 - k as f64 * HEIGHT_FLOOR;
                let gh = &grad_params[k + 1..];
                let soft: Vec<f64> = h.iter().map(|hj| (hj - HEIGHT_FLOOR) / scale).collect();
                let dot: f64 = soft.iter().zip(gh).map(|(s, g)| s * g).sum();
                for j in 0..k {
                    let g = scale * soft[j] * (gh[j] - dot);
                    grad_raw[k + 1 + j] = if live(k + 1 + j) { g } else { 0.0 };
                }
            }
            BasisParams::PSpline(p) => {
                let n = k + 1;
                let (z, _) = self.pspline_knots(raw);
                let e: Vec<f64> = (0..n)
                    .map(|j| softplus(raw[k + 1 + j].clamp(-RAW_LIMIT, RAW_LIMIT)) + POSITIVE_FLOOR)
                    .collect();
                let mass: f64 = (0..k).map(|j| 0.5 * (e[j] + e[j + 1]) * (z[j + 1] - z[j])).sum();
                let (gz, gd) = grad_params.split_at(n);
                let d = p.densities();
                let s: f64 = gd.iter().zip(d).map(|(g, dk)| g * dk).sum::<f64>() / mass;

                let mut gz_total = gz.to_vec();
                for j in 0..n {
                    let mut di_dz = 0.0;
                    if j >= 1 {
                        di_dz += 0.5 * (e[j - 1] + e[j]);
                    }
                    if j < k {
                        di_dz -= 0.5 * (e[j] + e[j + 1]);
                    }
                    gz_total[j] -= s * di_dz;

                    let mut di_de = 0.0;
                    if j >= 1 {
                        di_de += 0.5 * (z[j] - z[j - 1]);
                    }
                    if j < k {
                        di_de += 0.5 * (z[j + 1] - z[j]);
                    }
                    let ge = gd[j] / mass - s * di_de;
                    grad_raw[k + 1 + j] = ge * dsoft(k + 1 + j);
                }

                grad_raw[0] = if live(0) { gz_total.iter().sum() } else { 0.0 };
                let unit = self.unit();
                let mut tail = 0.0;
                for i in (1..=k).rev() {
                    tail += gz_total[i];
                    grad_raw[i] = unit * dsoft(i) * tail;
                }
            }
            BasisParams::Gaussian(_) => {
                grad_raw[0] = if live(0) { grad_params[0] } else { 0.0 };
                grad_raw[1] = grad_params[1] * dsoft(1);
            }
        }
    }
}

fn floored_softmax(logits: impl Iterator<Item = f64>) -> Vec<f64> {
    let logits: Vec<f64> = logits.collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let scale = 1.0 - logits.len() as f64 * HEIGHT_FLOOR;
    exps.into_iter().map(|e| scale * (e / total) + HEIGHT_FLOOR).collect()
}
