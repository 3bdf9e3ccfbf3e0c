use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composition::{Levels, QuantileModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::neural::Matrix;

use super::loss::{grid_levels, midpoint_levels, pinball, pinball_grad, GridMode};

/// Rows per chunk when scoring a whole dataset.
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Levels per loss evaluation.
    pub m: usize,
    pub grid: GridMode,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement and
    /// keep the best weights.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            batch: 128,
            epochs: 100,
            m: 32,
            grid: GridMode::Midpoint,
            seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("m must be >= 2, got {}", self.m)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be >= 1 when set".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean minibatch CRPS per completed epoch.
    pub train_loss: Vec<f64>,
    /// Validation CRPS per completed epoch (empty without validation data).
    pub val_loss: Vec<f64>,
    /// Seconds since the start of training, per completed epoch.
    pub wall_time: Vec<f64>,
    pub diverged: bool,
    /// What went wrong when `diverged` is set.
    pub diagnostic: Option<String>,
    pub model: QuantileModel,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn best_val(&self) -> Option<f64> {
        self.val_loss.iter().copied().fold(None, |acc, v| match acc {
            Some(b) if b <= v => Some(b),
            _ => Some(v),
        })
    }

    /// The report, or a training error if the run diverged.
    pub fn into_result(self) -> Result<Self> {
        if self.diverged {
            Err(Error::Training(
                self.diagnostic.clone().unwrap_or_else(|| "training diverged".into()),
            ))
        } else {
            Ok(self)
        }
    }
}

fn check_data(model: &QuantileModel, data: &Dataset, what: &str) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::Data(format!("{what} set is empty")));
    }
    if data.stats.is_none() {
        return Err(Error::Data(format!("{what} set must be normalized before training")));
    }
    if data.d() != model.input_dim() {
        return Err(Error::Data(format!(
            "{what} set has {} features, model expects {}",
            data.d(),
            model.input_dim()
        )));
    }
    Ok(())
}

fn rows_of(data: &Dataset, idx: &[usize]) -> Matrix {
    let mut m = Matrix::zeros(idx.len(), data.d());
    for (r, &i) in idx.iter().enumerate() {
        m.row_mut(r).copy_from_slice(data.row(i));
    }
    m
}

/// Mean CRPS of `model` over `data` (normalized units) on the midpoint grid.
pub fn dataset_crps(model: &QuantileModel, data: &Dataset, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Config(format!("m must be >= 2, got {m}")));
    }
    let levels = midpoint_levels(m);
    let mut total = 0.0;
    let idx: Vec<usize> = (0..data.n()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let xs = rows_of(data, chunk);
        let q = model.quantiles_normalized(&xs, &levels)?;
        for (r, &i) in chunk.iter().enumerate() {
            let y = data.targets[i];
            for (a, &qv) in levels.iter().zip(q.row(r)) {
                total += 2.0 * pinball(y, qv, *a);
            }
        }
    }
    let crps = total / (data.n() * m) as f64;
    if !crps.is_finite() {
        return Err(Error::Training("validation CRPS is not finite".into()));
    }
    Ok(crps)
}

/// Minibatch CRPS training with Adam.
///
/// Data must be normalized. Divergence (a non-finite loss or gradient) stops
/// training and sets `diverged` on the report; the model is left at its last
/// finite weights.
pub fn fit(mut model: QuantileModel, train: &Dataset, val: Option<&Dataset>, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_data(&model, train, "training")?;
    if let Some(v) = val {
        check_data(&model, v, "validation")?;
    }
    if cfg.grid == GridMode::Inclusive && model.plan.stages.iter().any(|s| !s.kind.bounded()) {
        return Err(Error::Config(
            "the inclusive grid reaches levels 0 and 1, where a gaussian stage is infinite".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.n()).collect();
    let start = Instant::now();
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        wall_time: Vec::new(),
        diverged: false,
        diagnostic: None,
        model: model.clone(),
    };
    let mut best: Option<(f64, QuantileModel)> = None;
    let mut since_best = 0;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let xs = rows_of(train, batch);
            let levels = match cfg.grid {
                GridMode::Stratified => Levels::PerRow(
                    (0..batch.len())
                        .map(|_| grid_levels(cfg.m, cfg.grid, &mut rng))
                        .collect(),
                ),
                mode => Levels::Shared(grid_levels(cfg.m, mode, &mut rng)),
            };
            let n_levels = levels.get(0).len() as f64;
            let scale = 2.0 / (n_levels * batch.len() as f64);
            let (loss, grads) = model.loss_and_grad(&xs, &levels, |r, _, alpha, q| {
                let y = train.targets[batch[r]];
                Ok((scale * pinball(y, q, alpha), scale * pinball_grad(y, q, alpha)))
            })?;
            if !loss.is_finite() {
                report.diverged = true;
                report.diagnostic = Some(format!("non-finite training loss in epoch {epoch}"));
                break 'epochs;
            }
            if let Some(s) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
                report.diverged = true;
                report.diagnostic = Some(format!("non-finite gradient for stage {s} in epoch {epoch}"));
                break 'epochs;
            }
            for (net, g) in model.networks.iter_mut().zip(&grads) {
                net.adam_step(g, cfg.lr)?;
            }
            epoch_loss += loss * batch.len() as f64;
        }
        report.train_loss.push(epoch_loss / train.n() as f64);
        if let Some(v) = val {
            let vl = match dataset_crps(&model, v, cfg.m) {
                Ok(vl) => vl,
                Err(Error::Training(msg)) => {
                    report.diverged = true;
                    report.diagnostic = Some(format!("epoch {epoch}: {msg}"));
                    report.wall_time.push(start.elapsed().as_secs_f64());
                    break;
                }
                Err(e) => return Err(e),
            };
            report.val_loss.push(vl);
            if let Some(patience) = cfg.patience {
                if best.as_ref().map_or(true, |(b, _)| vl < *b) {
                    best = Some((vl, model.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                }
                report.wall_time.push(start.elapsed().as_secs_f64());
                if since_best >= patience {
                    break;
                }
                continue;
            }
        }
        report.wall_time.push(start.elapsed().as_secs_f64());
    }
    report.model = match best {
        Some((_, m)) if cfg.patience.is_some() => m,
        _ => model,
    };
    Ok(report)
}
