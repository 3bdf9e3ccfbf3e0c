//! Tabular data, z-scores, splits, synthetic generators, forecasting helpers
//! and model archives.

pub mod archive;
mod dataset;
pub mod series;
pub mod synth;

pub use archive::{load_model, save_model, Fingerprint};
pub use dataset::{load_csv, split_dataset, split_sizes, CsvOptions, Dataset, NormStats, SplitTag, Splits};
pub use series::{lagged_dataset, load_series_csv, one_step, rollout, Feedback, Forecast, SeriesSpec};
