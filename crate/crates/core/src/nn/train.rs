use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::params::ParamSet;
use super::{grad_sum_by, Model, ParamSelection};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    /// Mini-batch gradient descent with a constant learning rate.
    Mbgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 1024,
            epochs: 5,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidTrainConfig(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidTrainConfig(format!(
                "batch size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidTrainConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub params: ParamSet,
    /// Parameters after each epoch; `snapshots[e]` is theta_{e+1}.
    pub snapshots: Vec<ParamSet>,
    /// Mean per-sample loss seen during each epoch (before each update).
    pub epoch_losses: Vec<f64>,
}

/// Trains `init` on `data` for `cfg.epochs` epochs, keeping a snapshot per epoch.
pub fn train<M: Model>(
    model: &M,
    init: ParamSet,
    data: &[M::Sample],
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    train_excluding(model, init, data, cfg, None)
}

/// Like [`train`], but sample `excluded` never contributes a gradient.
///
/// The batch schedule is the one for the full dataset: every epoch shuffles
/// all indices with the run seed and cuts consecutive batches of
/// `batch_size`. The batch that held the excluded sample is one short and its
/// mean uses the reduced count. Two runs that differ only in `excluded` see the
/// same batches otherwise, which is what a leave-one-out comparison needs.
pub fn train_excluding<M: Model>(
    model: &M,
    init: ParamSet,
    data: &[M::Sample],
    cfg: &TrainConfig,
    excluded: Option<usize>,
) -> Result<TrainRun> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = match cfg.optimizer {
        Optimizer::Adam => Some(Adam::new(&params, cfg.lr)),
        Optimizer::Mbgd => None,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch: Vec<usize> = Vec::with_capacity(cfg.batch_size);
    let mut snapshots = Vec::with_capacity(cfg.epochs);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().copied().filter(|&i| Some(i) != excluded));
            if batch.is_empty() {
                continue;
            }
            let (mut g, l) = grad_sum_by(
                model,
                &params,
                batch.len(),
                |j| &data[batch[j]],
                ParamSelection::Full,
            )?;
            g.scale(1.0 / batch.len() as f64);
            loss_sum += l;
            seen += batch.len();
            match adam.as_mut() {
                Some(a) => a.step(&mut params, &g)?,
                None => params.add_scaled(&g, -cfg.lr)?,
            }
        }
        if !params.is_finite() {
            return Err(Error::InvalidTrainConfig(
                "training diverged to non-finite parameters".into(),
            ));
        }
        epoch_losses.push(loss_sum / seen.max(1) as f64);
        snapshots.push(params.clone());
    }
    Ok(TrainRun {
        params,
        snapshots,
        epoch_losses,
    })
}
