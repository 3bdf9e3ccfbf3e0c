//! Composition plans, composite quantile models and the plan search.

mod model;
mod plan;
mod search;

pub use model::{Levels, NetworkOptions, QuantileModel, MIN_RANGE};
pub use plan::{
    default_lambda_grid, enumerate_candidates, CandidateSpace, CompositionPlan, Mode, Normalizer, SpaceBounds,
    StageSpec, DEFAULT_KNOTS, DEFAULT_MAX_DEPTH,
};
pub use search::{search, LeaderboardEntry, SearchConfig, SearchOutcome};
