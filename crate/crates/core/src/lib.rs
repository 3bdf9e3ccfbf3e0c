//! Quantile regression with searchable compositions of monotone spline
//! quantile functions.
//!
//! A model maps features `x` and a level `alpha` to the conditional
//! `alpha`-quantile of the target. Each stage of a model is a basis quantile
//! function (c-spline, p-spline or Gaussian) whose parameters come from a
//! small neural network; stages are combined by a weighted sum, by chaining
//! through the level (`alpha`-chain) or by chaining through the input
//! (`x`-chain). Models are fit by minimizing a Monte-Carlo estimate of the
//! CRPS, and a search over compositions picks the best plan on validation
//! data.
//!
//! Module map:
//!
//! * [`spline`]: basis quantile functions, their CDFs and gradients
//! * [`neural`]: parameter networks, output heads, Adam
//! * [`composition`]: plans, composite models, candidate search
//! * [`training`]: pinball / CRPS losses and the fitting loop
//! * [`evaluation`]: point and quantile metrics, calibration curves
//! * [`data`]: CSV ingestion, z-scores, splits, synthetic data, forecasting
//!   helpers, model archives
//! * [`cli`]: the `nss` command-line front end

pub mod cli;
pub mod composition;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod neural;
pub mod spline;
pub mod training;

pub use composition::{CompositionPlan, Mode, QuantileModel, StageSpec};
pub use data::Dataset;
pub use error::{Error, Result};
pub use training::TrainConfig;
