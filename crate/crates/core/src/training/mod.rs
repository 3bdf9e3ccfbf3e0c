//! CRPS loss and the fitting loop.

mod fit;
pub mod loss;

pub use fit::{dataset_crps, fit, TrainConfig, TrainReport};
pub use loss::{crps_estimate, grid_levels, midpoint_levels, pinball, pinball_grad, GridMode};
