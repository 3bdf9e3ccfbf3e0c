//! Basis quantile functions: c-spline, p-spline and Gaussian.
//!
//! Every basis is monotone in the level by construction. Each one exposes its
//! quantile, the inverse (CDF), and analytic partials of the quantile with
//! respect to its flat parameter vector.

mod cspline;
mod gaussian;
pub mod normal;
mod pspline;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cspline::CSplineParams;
pub use gaussian::GaussianParams;
pub use pspline::PSplineParams;

pub(crate) fn check_level(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile level {alpha} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    CSpline,
    PSpline,
    Gaussian,
}

impl BasisKind {
    pub const ALL: [BasisKind; 3] = [BasisKind::CSpline, BasisKind::PSpline, BasisKind::Gaussian];

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::CSpline => "c-spline",
            BasisKind::PSpline => "p-spline",
            BasisKind::Gaussian => "gaussian",
        }
    }

    pub fn short(self) -> char {
        match self {
            BasisKind::CSpline => 'c',
            BasisKind::PSpline => 'p',
            BasisKind::Gaussian => 'g',
        }
    }

    /// Whether the support is bounded (`q(0)`, `q(1)` finite).
    pub fn bounded(self) -> bool {
        !matches!(self, BasisKind::Gaussian)
    }

    /// Length of the flat parameter vector for `knots` bins.
    pub fn param_count(self, knots: usize) -> usize {
        match self {
            BasisKind::CSpline => 2 * knots + 1,
            BasisKind::PSpline => 2 * knots + 2,
            BasisKind::Gaussian => 2,
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c" | "c-spline" | "cspline" => Ok(BasisKind::CSpline),
            "p" | "p-spline" | "pspline" => Ok(BasisKind::PSpline),
            "g" | "gaussian" | "normal" => Ok(BasisKind::Gaussian),
            other => Err(Error::Config(format!("unknown basis kind '{other}'"))),
        }
    }
}

/// Partials of one basis quantile with respect to its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisGradient {
    pub partials: Vec<f64>,
    /// Derivative with respect to the level.
    pub d_alpha: f64,
}

/// Parameters of one basis at one input point.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisParams {
    CSpline(CSplineParams),
    PSpline(PSplineParams),
    Gaussian(GaussianParams),
}

impl BasisParams {
    pub fn kind(&self) -> BasisKind {
        match self {
            BasisParams::CSpline(_) => BasisKind::CSpline,
            BasisParams::PSpline(_) => BasisKind::PSpline,
            BasisParams::Gaussian(_) => BasisKind::Gaussian,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            BasisParams::CSpline(p) => p.param_count(),
            BasisParams::PSpline(p) => p.param_count(),
            BasisParams::Gaussian(_) => 2,
        }
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        match self {
            BasisParams::CSpline(p) => p.quantile(alpha),
            BasisParams::PSpline(p) => p.quantile(alpha),
            BasisParams::Gaussian(p) => p.quantile(alpha),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            BasisParams::CSpline(p) => p.cdf(y),
            BasisParams::PSpline(p) => p.cdf(y),
            BasisParams::Gaussian(p) => p.cdf(y),
        }
    }

    /// `q(0)`; `-inf` for the Gaussian.
    pub fn lower(&self) -> f64 {
        match self {
            BasisParams::CSpline(p) => p.lower(),
            BasisParams::PSpline(p) => p.lower(),
            BasisParams::Gaussian(_) => f64::NEG_INFINITY,
        }
    }

    /// `q(1)`; `+inf` for the Gaussian.
    pub fn upper(&self) -> f64 {
        match self {
            BasisParams::CSpline(p) => p.upper(),
            BasisParams::PSpline(p) => p.upper(),
            BasisParams::Gaussian(_) => f64::INFINITY,
        }
    }

    pub fn quantile_grad(&self, alpha: f64) -> Result<BasisGradient> {
        // validates the level the same way the forward pass does
        self.quantile(alpha)?;
        let mut partials = vec![0.0; self.param_count()];
        let d_alpha = self.grad_into(alpha, &mut partials);
        Ok(BasisGradient { partials, d_alpha })
    }

    /// Writes partials into `out` and returns `dq/dalpha`. The level must
    /// already be validated.
    pub(crate) fn grad_into(&self, alpha: f64, out: &mut [f64]) -> f64 {
        match self {
            BasisParams::CSpline(p) => p.quantile_grad(alpha, out),
            BasisParams::PSpline(p) => p.quantile_grad(alpha, out),
            BasisParams::Gaussian(p) => p.quantile_grad(alpha, out),
        }
    }

    pub(crate) fn lower_grad(&self, out: &mut [f64]) {
        match self {
            BasisParams::CSpline(p) => p.lower_grad(out),
            BasisParams::PSpline(p) => p.lower_grad(out),
            BasisParams::Gaussian(_) => out.iter_mut().for_each(|g| *g = 0.0),
        }
    }

    pub(crate) fn upper_grad(&self, out: &mut [f64]) {
        match self {
            BasisParams::CSpline(p) => p.upper_grad(out),
            BasisParams::PSpline(p) => p.upper_grad(out),
            BasisParams::Gaussian(_) => out.iter_mut().for_each(|g| *g = 0.0),
        }
    }

    /// Flat parameter vector in the layout used by the gradients.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            BasisParams::CSpline(p) => p.to_vec(),
            BasisParams::PSpline(p) => p.to_vec(),
            BasisParams::Gaussian(p) => vec![p.mu(), p.sigma()],
        }
    }

    /// Same-kind params from a flat vector, skipping normalization checks.
    #[doc(hidden)]
    pub fn from_vec_unchecked(kind: BasisKind, v: &[f64]) -> Self {
        match kind {
            BasisKind::CSpline => BasisParams::CSpline(CSplineParams::from_vec_unchecked(v)),
            BasisKind::PSpline => BasisParams::PSpline(PSplineParams::from_vec_unchecked(v)),
            BasisKind::Gaussian => BasisParams::Gaussian(GaussianParams::new(v[0], v[1]).expect("valid gaussian")),
        }
    }

    /// Smallest distance from `alpha` to an interior knot level.
    pub fn knot_margin(&self, alpha: f64) -> f64 {
        let levels: &[f64] = match self {
            BasisParams::CSpline(p) => p.knot_levels(),
            BasisParams::PSpline(p) => p.knot_levels(),
            BasisParams::Gaussian(_) => return f64::INFINITY,
        };
        let n = levels.len();
        levels[1..n - 1]
            .iter()
            .map(|l| (l - alpha).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

impl From<CSplineParams> for BasisParams {
    fn from(p: CSplineParams) -> Self {
        BasisParams::CSpline(p)
    }
}

impl From<PSplineParams> for BasisParams {
    fn from(p: PSplineParams) -> Self {
        BasisParams::PSpline(p)
    }
}

impl From<GaussianParams> for BasisParams {
    fn from(p: GaussianParams) -> Self {
        BasisParams::Gaussian(p)
    }
}
