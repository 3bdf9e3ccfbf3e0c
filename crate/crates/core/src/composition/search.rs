//! Train-and-select search over a candidate space of composition plans.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::data::{Dataset, NormStats};
use crate::error::{Error, Result};
use crate::training::{dataset_crps, fit, TrainConfig};

use super::model::{NetworkOptions, QuantileModel};
use super::plan::{
    enumerate_candidates, CandidateSpace, CompositionPlan, SpaceBounds, DEFAULT_KNOTS, DEFAULT_MAX_DEPTH,
};

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub space: CandidateSpace,
    /// Accept the first candidate (in enumeration order) whose validation
    /// CRPS is at most this. Zero disables early exit.
    pub delta: f64,
    pub train: TrainConfig,
    pub network: NetworkOptions,
    /// Shared by every candidate, for both initialization and shuffling.
    pub seed: u64,
    pub max_depth: usize,
    /// Train candidates on the rayon pool. Ignored when `delta > 0`.
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            space: CandidateSpace::Generated(SpaceBounds::default_search(DEFAULT_KNOTS)),
            delta: 0.0,
            train: TrainConfig::default(),
            network: NetworkOptions::default(),
            seed: 0,
            max_depth: DEFAULT_MAX_DEPTH,
            parallel: true,
        }
    }
}

/// One trained candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardEntry {
    /// Position in enumeration order.
    pub index: usize,
    pub plan: CompositionPlan,
    /// `None` when training failed.
    pub val_crps: Option<f64>,
    pub params: usize,
    pub epochs: usize,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: QuantileModel,
    /// Sorted best first; failed candidates last.
    pub leaderboard: Vec<LeaderboardEntry>,
    /// True when a candidate met the acceptance threshold and the rest of
    /// the space was skipped.
    pub early_exit: bool,
}

impl SearchOutcome {
    pub fn best_entry(&self) -> &LeaderboardEntry {
        &self.leaderboard[0]
    }
}

fn rank(a: &LeaderboardEntry, b: &LeaderboardEntry) -> Ordering {
    match (a.val_crps, b.val_crps) {
        (Some(x), Some(y)) => x
            .total_cmp(&y)
            .then(a.params.cmp(&b.params))
            .then(a.index.cmp(&b.index)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    }
}

fn train_candidate(
    index: usize,
    plan: &CompositionPlan,
    stats: &NormStats,
    train: &Dataset,
    val: &Dataset,
    cfg: &SearchConfig,
) -> (LeaderboardEntry, Option<QuantileModel>) {
    let mut entry = LeaderboardEntry {
        index,
        plan: plan.clone(),
        val_crps: None,
        params: 0,
        epochs: 0,
        diagnostic: None,
    };
    let run = || -> Result<(f64, usize, QuantileModel)> {
        let model = QuantileModel::new(plan.clone(), stats.clone(), &cfg.network, cfg.seed)?;
        let tc = TrainConfig {
            seed: cfg.seed,
            ..cfg.train.clone()
        };
        let report = fit(model, train, Some(val), &tc)?.into_result()?;
        let crps = dataset_crps(&report.model, val, tc.m)?;
        Ok((crps, report.epochs(), report.model))
    };
    match run() {
        Ok((crps, epochs, model)) => {
            entry.val_crps = Some(crps);
            entry.params = model.param_count();
            entry.epochs = epochs;
            (entry, Some(model))
        }
        Err(e) => {
            entry.diagnostic = Some(format!("{}: {e}", e.reason()));
            (entry, None)
        }
    }
}

/// Trains every candidate plan and returns the one with the lowest
/// validation CRPS.
///
/// Ties are broken by parameter count, then enumeration order, so the
/// result does not depend on how candidates were scheduled.
pub fn search(cfg: &SearchConfig, train: &Dataset, val: &Dataset) -> Result<SearchOutcome> {
    if !(cfg.delta >= 0.0) {
        return Err(Error::Config(format!("delta must be >= 0, got {}", cfg.delta)));
    }
    cfg.train.validate()?;
    let stats = match (&train.stats, &val.stats) {
        (Some(s), Some(v)) if s == v => s.clone(),
        (Some(_), Some(_)) => {
            return Err(Error::Data(
                "training and validation sets use different normalization".into(),
            ))
        }
        _ => {
            return Err(Error::Data(
                "search needs normalized training and validation sets".into(),
            ))
        }
    };
    let plans = enumerate_candidates(&cfg.space, cfg.max_depth)?;

    let mut results: Vec<(LeaderboardEntry, Option<QuantileModel>)> = Vec::with_capacity(plans.len());
    let mut early_exit = false;
    if cfg.delta > 0.0 {
        for (i, plan) in plans.iter().enumerate() {
            let r = train_candidate(i, plan, &stats, train, val, cfg);
            let hit = r.0.val_crps.is_some_and(|c| c <= cfg.delta);
            results.push(r);
            if hit {
                early_exit = i + 1 < plans.len();
                break;
            }
        }
    } else if cfg.parallel {
        results = plans
            .par_iter()
            .enumerate()
            .map(|(i, plan)| train_candidate(i, plan, &stats, train, val, cfg))
            .collect();
    } else {
        results = plans
            .iter()
            .enumerate()
            .map(|(i, plan)| train_candidate(i, plan, &stats, train, val, cfg))
            .collect();
    }

    if results.iter().all(|(e, _)| e.val_crps.is_none()) {
        return Err(Error::SearchFailed {
            diagnostics: results
                .iter()
                .map(|(e, _)| format!("{}: {}", e.plan, e.diagnostic.as_deref().unwrap_or("unknown failure")))
                .collect(),
        });
    }

    // a candidate that met delta wins even if an earlier one scored lower
    let accepted = match results.last() {
        Some((e, _)) if cfg.delta > 0.0 && e.val_crps.is_some_and(|c| c <= cfg.delta) => Some(e.index),
        _ => None,
    };

    let mut leaderboard: Vec<LeaderboardEntry> = results.iter().map(|(e, _)| e.clone()).collect();
    leaderboard.sort_by(rank);
    let chosen = accepted.unwrap_or(leaderboard[0].index);
    if leaderboard[0].index != chosen {
        let pos = leaderboard
            .iter()
            .position(|e| e.index == chosen)
            .expect("chosen entry present");
        let e = leaderboard.remove(pos);
        leaderboard.insert(0, e);
    }
    let best = results
        .into_iter()
        .find(|(e, _)| e.index == chosen)
        .and_then(|(_, m)| m)
        .expect("chosen candidate trained successfully");
    Ok(SearchOutcome {
        best,
        leaderboard,
        early_exit,
    })
}
