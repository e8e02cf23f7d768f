//! Minimal neural-network kernel with manual backpropagation.
//!
//! Models implement [`Model`]: a forward pass that records a tape, and a
//! backward pass that adds `upstream * d prediction / d params` into a
//! [`SparseGrad`]. Everything else here (losses, per-sample and batch
//! gradients, optimizers, the training loop) is generic over that trait.
//!
//! Batch reductions split the batch into fixed-size chunks, reduce each chunk
//! sequentially, and sum the chunk results in order. The result does not
//! depend on the number of worker threads.

mod loss;
mod optim;
pub(crate) mod params;
mod train;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use loss::{loss, loss_grad, sigmoid, softplus, LossKind};
pub use optim::{apply_adam, apply_mbgd, Adam, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{GroupId, Layout, LayoutBuilder, Matrix, ParamKey, ParamSet, Row, SparseGrad};
pub use train::{train, train_excluding, Optimizer, TrainConfig, TrainRun};

/// A training example with a supervised target.
pub trait Sample {
    fn target(&self, kind: LossKind) -> Result<f64>;
}

/// Which parameters a per-sample gradient covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ParamSelection {
    /// Every parameter the sample reaches.
    Full,
    /// Only the sample's user and item embedding rows plus the final dense
    /// layer; all other gradients are treated as zero.
    #[default]
    Selected,
}

pub trait Model: Send + Sync {
    type Sample: Sample + Send + Sync;
    /// Intermediate values the backward pass needs.
    type Tape;

    fn head(&self) -> LossKind;

    fn layout(&self) -> &Arc<Layout>;

    /// Forward pass. For a logistic head the prediction is the logit.
    fn forward_tape(&self, params: &ParamSet, sample: &Self::Sample) -> Result<(f64, Self::Tape)>;

    /// Adds `upstream * d prediction / d params` into `grad`, restricted to
    /// `selection`.
    fn backward(
        &self,
        params: &ParamSet,
        sample: &Self::Sample,
        tape: &Self::Tape,
        upstream: f64,
        selection: ParamSelection,
        grad: &mut SparseGrad,
    );

    /// Input of the final fully connected layer.
    fn feature(&self, params: &ParamSet, sample: &Self::Sample) -> Result<Vec<f64>>;

    fn forward(&self, params: &ParamSet, sample: &Self::Sample) -> Result<f64> {
        self.forward_tape(params, sample).map(|(p, _)| p)
    }
}

/// Prediction for one sample (a logit for logistic heads).
pub fn forward<M: Model>(model: &M, params: &ParamSet, sample: &M::Sample) -> Result<f64> {
    model.forward(params, sample)
}

pub fn sample_loss<M: Model>(model: &M, params: &ParamSet, sample: &M::Sample) -> Result<f64> {
    let kind = model.head();
    let y = sample.target(kind)?;
    loss(model.forward(params, sample)?, y, kind)
}

/// Adds `scale * grad L(sample)` into `grad` and returns the sample's loss.
pub fn accumulate_grad<M: Model>(
    model: &M,
    params: &ParamSet,
    sample: &M::Sample,
    selection: ParamSelection,
    scale: f64,
    grad: &mut SparseGrad,
) -> Result<f64> {
    let kind = model.head();
    let y = sample.target(kind)?;
    let (pred, tape) = model.forward_tape(params, sample)?;
    let l = loss(pred, y, kind)?;
    let d = loss_grad(pred, y, kind)?;
    model.backward(params, sample, &tape, scale * d, selection, grad);
    Ok(l)
}

/// Gradient of one sample's loss.
pub fn per_sample_grad<M: Model>(
    model: &M,
    params: &ParamSet,
    sample: &M::Sample,
    selection: ParamSelection,
) -> Result<SparseGrad> {
    let mut g = SparseGrad::new();
    accumulate_grad(model, params, sample, selection, 1.0, &mut g)?;
    Ok(g)
}

const CHUNK: usize = 64;

/// Sum of per-sample gradients and losses over `n` samples fetched by index.
pub(crate) fn grad_sum_by<'a, M, F>(
    model: &M,
    params: &ParamSet,
    n: usize,
    get: F,
    selection: ParamSelection,
) -> Result<(SparseGrad, f64)>
where
    M: Model,
    M::Sample: 'a,
    F: Fn(usize) -> &'a M::Sample + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Result<(SparseGrad, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut g = SparseGrad::new();
            let mut l = 0.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                l += accumulate_grad(model, params, get(i), selection, 1.0, &mut g)
                    .map_err(|e| e.at_sample(i))?;
            }
            Ok((g, l))
        })
        .collect();
    let mut total = SparseGrad::new();
    let mut loss_sum = 0.0;
    for p in partials {
        let (g, l) = p?;
        if total.is_empty() {
            total = g;
        } else {
            total.add_scaled(&g, 1.0);
        }
        loss_sum += l;
    }
    Ok((total, loss_sum))
}

/// Mean gradient over a batch, `g(D, theta) = (1/n) sum_i grad L(z_i, theta)`.
pub fn batch_grad<M: Model>(
    model: &M,
    params: &ParamSet,
    batch: &[M::Sample],
    selection: ParamSelection,
) -> Result<SparseGrad> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (g, _) = grad_sum_by(model, params, batch.len(), |i| &batch[i], selection)?;
    Ok(g.scaled(1.0 / batch.len() as f64))
}

/// Mean loss over a dataset, `L(D, theta)`.
pub fn dataset_loss<M: Model>(model: &M, params: &ParamSet, data: &[M::Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let partials: Vec<Result<f64>> = data
        .par_chunks(CHUNK * 4)
        .enumerate()
        .map(|(c, chunk)| {
            let mut s = 0.0;
            for (j, z) in chunk.iter().enumerate() {
                s += sample_loss(model, params, z).map_err(|e| e.at_sample(c * CHUNK * 4 + j))?;
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total / data.len() as f64)
}

/// Predictions for every sample, in order.
pub fn predict_all<M: Model>(model: &M, params: &ParamSet, data: &[M::Sample]) -> Result<Vec<f64>> {
    data.par_iter()
        .enumerate()
        .map(|(i, z)| model.forward(params, z).map_err(|e| e.at_sample(i)))
        .collect()
}
