use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::BasisKind;

/// Default knot count per spline stage.
pub const DEFAULT_KNOTS: usize = 32;
/// Default upper bound on composition depth.
pub const DEFAULT_MAX_DEPTH: usize = 4;

/// How stages are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `q_1 + lambda * (q_2 + ... + q_k)`
    Sum,
    /// Each stage's normalized output becomes the next stage's level.
    AlphaChain,
    /// Each stage's output becomes the next stage's (scalar) input.
    XChain,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Sum, Mode::AlphaChain, Mode::XChain];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Sum => "sum",
            Mode::AlphaChain => "alpha-chain",
            Mode::XChain => "x-chain",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sum" => Ok(Mode::Sum),
            "alpha-chain" | "alpha" | "a-chain" => Ok(Mode::AlphaChain),
            "x-chain" | "x" => Ok(Mode::XChain),
            other => Err(Error::Config(format!("unknown composition mode '{other}'"))),
        }
    }
}

/// Map from a stage output back to a level in `[0, 1]` (alpha-chain only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalizer {
    /// `(y - q(0)) / (q(1) - q(0))`
    #[default]
    MinMax,
    /// Logistic squashing of the raw output.
    Sigmoid,
}

impl FromStr for Normalizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minmax" | "min-max" | "scale" => Ok(Normalizer::MinMax),
            "sigmoid" => Ok(Normalizer::Sigmoid),
            other => Err(Error::Config(format!("unknown normalizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageSpec {
    pub kind: BasisKind,
    pub knots: usize,
}

impl StageSpec {
    pub fn new(kind: BasisKind, knots: usize) -> Self {
        let knots = if kind == BasisKind::Gaussian { 0 } else { knots };
        Self { kind, knots }
    }
}

/// A symbolic composition: which bases, in which order, combined how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionPlan {
    pub mode: Mode,
    pub stages: Vec<StageSpec>,
    /// Scale of the non-leading terms; sum mode only.
    pub lambda: f64,
    #[serde(default)]
    pub normalizer: Normalizer,
}

impl CompositionPlan {
    pub fn single(kind: BasisKind, knots: usize) -> Self {
        Self {
            mode: Mode::Sum,
            stages: vec![StageSpec::new(kind, knots)],
            lambda: 0.0,
            normalizer: Normalizer::MinMax,
        }
    }

    pub fn sum(stages: Vec<StageSpec>, lambda: f64) -> Self {
        Self {
            mode: Mode::Sum,
            stages,
            lambda,
            normalizer: Normalizer::MinMax,
        }
    }

    pub fn chain(mode: Mode, stages: Vec<StageSpec>) -> Self {
        Self {
            mode,
            stages,
            lambda: 0.0,
            normalizer: Normalizer::MinMax,
        }
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn validate(&self, max_depth: usize) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("composition plan has no stages".into()));
        }
        if self.depth() > max_depth {
            return Err(Error::Config(format!(
                "plan depth {} exceeds the configured maximum {max_depth}",
                self.depth()
            )));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.kind != BasisKind::Gaussian && s.knots == 0 {
                return Err(Error::Config(format!("stage {i} ({}) needs at least one knot", s.kind)));
            }
        }
        if self.mode == Mode::Sum && !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "sum lambda {} must be finite and >= 0",
                self.lambda
            )));
        }
        if self.mode == Mode::AlphaChain && self.normalizer == Normalizer::MinMax {
            let n = self.depth();
            if let Some(i) = self.stages[..n - 1].iter().position(|s| !s.kind.bounded()) {
                return Err(Error::Config(format!(
                    "alpha-chain stage {i} is gaussian: its range is unbounded, so min-max normalization is undefined"
                )));
            }
        }
        Ok(())
    }

    /// Same plan with fields that have no effect cleared, so equal behaviour
    /// means equal value.
    pub fn canonical(&self) -> Self {
        let mut p = self.clone();
        if p.depth() == 1 {
            p.mode = Mode::Sum;
            p.lambda = 0.0;
            p.normalizer = Normalizer::MinMax;
        } else if p.mode != Mode::Sum {
            p.lambda = 0.0;
        }
        if p.mode != Mode::AlphaChain {
            p.normalizer = Normalizer::MinMax;
        }
        p
    }

    /// Stable human-readable label, e.g. `sum(c32,p32;0.5)`.
    pub fn label(&self) -> String {
        let stages: Vec<String> = self
            .stages
            .iter()
            .map(|s| match s.kind {
                BasisKind::Gaussian => "g".to_string(),
                k => format!("{}{}", k.short(), s.knots),
            })
            .collect();
        let stages = stages.join(",");
        if self.depth() == 1 {
            return stages;
        }
        match self.mode {
            Mode::Sum => format!("sum({stages};{})", self.lambda),
            Mode::AlphaChain if self.normalizer == Normalizer::Sigmoid => format!("alpha-chain-sigmoid({stages})"),
            m => format!("{m}({stages})"),
        }
    }

    /// Parses a named preset or the explicit form `mode:kinds[:lambda]`.
    ///
    /// Presets: `c-spline`, `p-spline`, `gaussian`, `nss-sum` (c + lambda p),
    /// `nss-alpha-chain` (c then p), `nss-x-chain` (c then c).
    /// Explicit: `sum:c,p:0.5`, `alpha-chain:c,p`, `x-chain:c,c`.
    pub fn parse(text: &str, knots: usize, lambda: f64) -> Result<Self> {
        let text = text.trim();
        let c = StageSpec::new(BasisKind::CSpline, knots);
        let p = StageSpec::new(BasisKind::PSpline, knots);
        let plan = match text.to_ascii_lowercase().as_str() {
            "c-spline" | "cspline" => Self::single(BasisKind::CSpline, knots),
            "p-spline" | "pspline" => Self::single(BasisKind::PSpline, knots),
            "gaussian" => Self::single(BasisKind::Gaussian, 0),
            "nss-sum" => Self::sum(vec![c, p], lambda),
            "nss-alpha-chain" => Self::chain(Mode::AlphaChain, vec![c, p]),
            "nss-x-chain" => Self::chain(Mode::XChain, vec![c, c]),
            _ => {
                let parts: Vec<&str> = text.split(':').collect();
                if parts.len() < 2 || parts.len() > 3 {
                    return Err(Error::Config(format!(
                        "cannot parse plan '{text}' (expected a preset or mode:kinds[:lambda])"
                    )));
                }
                let mode: Mode = parts[0].parse()?;
                let stages = parts[1]
                    .split(',')
                    .map(|k| k.parse::<BasisKind>().map(|k| StageSpec::new(k, knots)))
                    .collect::<Result<Vec<_>>>()?;
                let lambda = match parts.get(2) {
                    Some(l) => l
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad lambda '{l}' in plan '{text}'")))?,
                    None => lambda,
                };
                match mode {
                    Mode::Sum => Self::sum(stages, lambda),
                    m => Self::chain(m, stages),
                }
            }
        };
        Ok(plan)
    }
}

impl fmt::Display for CompositionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Bounds of a candidate space: either an explicit plan list or a generator.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateSpace {
    Explicit(Vec<CompositionPlan>),
    Generated(SpaceBounds),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceBounds {
    pub min_depth: usize,
    pub max_depth: usize,
    pub kinds: Vec<BasisKind>,
    pub modes: Vec<Mode>,
    /// Sum-mode scale grid.
    pub lambdas: Vec<f64>,
    pub knots: usize,
    /// Explicit stage-kind assignments; overrides `kinds` and depth bounds.
    pub assignments: Option<Vec<Vec<BasisKind>>>,
}

/// Sum-mode scale grid used by default.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl SpaceBounds {
    /// Depth-2 over every ordered pair of c-/p-splines.
    pub fn depth_two(modes: Vec<Mode>, lambdas: Vec<f64>, knots: usize) -> Self {
        Self {
            min_depth: 2,
            max_depth: 2,
            kinds: vec![BasisKind::CSpline, BasisKind::PSpline],
            modes,
            lambdas,
            knots,
            assignments: None,
        }
    }

    /// `(c,p)`, `(c,c)`, `(p,p)` in all three modes, lambda grid 0.1..0.9.
    pub fn default_search(knots: usize) -> Self {
        use BasisKind::{CSpline as C, PSpline as P};
        Self {
            min_depth: 2,
            max_depth: 2,
            kinds: vec![C, P],
            modes: Mode::ALL.to_vec(),
            lambdas: default_lambda_grid(),
            knots,
            assignments: Some(vec![vec![C, P], vec![C, C], vec![P, P]]),
        }
    }
}

fn assignments_of_depth(kinds: &[BasisKind], depth: usize) -> Vec<Vec<BasisKind>> {
    let mut out: Vec<Vec<BasisKind>> = vec![vec![]];
    for _ in 0..depth {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                kinds.iter().map(move |&k| {
                    let mut v = prefix.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out
}

/// Every plan in the space, in a fixed order, without duplicates.
///
/// Order: assignment, then mode, then lambda. Plans that are invalid for a
/// mode (a gaussian inside an alpha-chain) are skipped.
pub fn enumerate_candidates(space: &CandidateSpace, max_depth: usize) -> Result<Vec<CompositionPlan>> {
    let raw: Vec<CompositionPlan> = match space {
        CandidateSpace::Explicit(plans) => {
            for p in plans {
                p.validate(max_depth)?;
            }
            plans.clone()
        }
        CandidateSpace::Generated(b) => {
            if b.min_depth == 0 || b.min_depth > b.max_depth {
                return Err(Error::Config(format!(
                    "depth bounds [{}, {}] are empty",
                    b.min_depth, b.max_depth
                )));
            }
            if b.max_depth > max_depth {
                return Err(Error::Config(format!(
                    "search depth {} exceeds the configured maximum {max_depth}",
                    b.max_depth
                )));
            }
            let assignments = match &b.assignments {
                Some(a) => a.clone(),
                None => (b.min_depth..=b.max_depth)
                    .flat_map(|d| assignments_of_depth(&b.kinds, d))
                    .collect(),
            };
            let mut plans = Vec::new();
            for kinds in assignments {
                let stages: Vec<StageSpec> = kinds.iter().map(|&k| StageSpec::new(k, b.knots)).collect();
                if stages.len() == 1 {
                    plans.push(CompositionPlan::sum(stages, 0.0));
                    continue;
                }
                for &mode in &b.modes {
                    match mode {
                        Mode::Sum => {
                            for &l in &b.lambdas {
                                plans.push(CompositionPlan::sum(stages.clone(), l));
                            }
                        }
                        m => plans.push(CompositionPlan::chain(m, stages.clone())),
                    }
                }
            }
            plans.retain(|p| p.validate(max_depth).is_ok());
            plans
        }
    };
    let mut seen: Vec<CompositionPlan> = Vec::with_capacity(raw.len());
    let mut out = Vec::with_capacity(raw.len());
    for p in raw {
        let c = p.canonical();
        if !seen.contains(&c) {
            seen.push(c);
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("candidate space is empty".into()));
    }
    Ok(out)
}
