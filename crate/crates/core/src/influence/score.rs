//! Gradient-alignment scores against a fixed reference direction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    batch_grad, per_sample_grad, Layout, Model, ParamSelection, ParamSet, SparseGrad, TrainRun,
};

/// The direction every sample gradient is projected onto.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceVector(SparseGrad);

impl ReferenceVector {
    /// Wraps `grad` after checking that it is finite and that each entry fits
    /// `layout`.
    pub fn new(grad: SparseGrad, layout: &Layout) -> Result<Self> {
        if !grad.is_finite() {
            return Err(Error::ShapeMismatch(
                "reference vector is not finite".into(),
            ));
        }
        for (key, values) in grad.iter() {
            if key.group.0 >= layout.len() {
                return Err(Error::ShapeMismatch(format!(
                    "reference entry for group {} but layout has {}",
                    key.group.0,
                    layout.len()
                )));
            }
            let (rows, cols) = layout.shape(key.group);
            let want = match key.row {
                crate::nn::Row::Whole => rows * cols,
                crate::nn::Row::Index(r) if r < rows => cols,
                crate::nn::Row::Index(r) => {
                    return Err(Error::ShapeMismatch(format!(
                        "reference row {r} of {} is out of range",
                        layout.name(key.group)
                    )))
                }
            };
            if values.len() != want {
                return Err(Error::ShapeMismatch(format!(
                    "reference entry for {} has {} values, expected {want}",
                    layout.name(key.group),
                    values.len()
                )));
            }
        }
        Ok(Self(grad))
    }

    pub fn as_grad(&self) -> &SparseGrad {
        &self.0
    }

    pub fn into_grad(self) -> SparseGrad {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.clone().scaled(c))
    }
}

/// Mean gradient of `data` at `params`, restricted to `selection`.
pub fn reference_vector<M: Model>(
    model: &M,
    params: &ParamSet,
    data: &[M::Sample],
    selection: ParamSelection,
) -> Result<ReferenceVector> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ReferenceVector::new(batch_grad(model, params, data, selection)?, model.layout())
}

/// `V . grad L(z, params)` over the selected support.
pub fn ggscore<M: Model>(
    model: &M,
    params: &ParamSet,
    sample: &M::Sample,
    reference: &ReferenceVector,
    selection: ParamSelection,
) -> Result<f64> {
    if !params.layout().as_ref().eq(model.layout().as_ref()) {
        return Err(Error::ShapeMismatch(
            "parameters do not match the model layout".into(),
        ));
    }
    Ok(reference
        .0
        .dot(&per_sample_grad(model, params, sample, selection)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub index: usize,
    pub score: f64,
}

/// Scores for every sample in `data`, in input order.
pub fn ggscore_batch<M: Model>(
    model: &M,
    params: &ParamSet,
    data: &[M::Sample],
    reference: &ReferenceVector,
    selection: ParamSelection,
) -> Result<Vec<ScoreEntry>> {
    let scored: Vec<Result<ScoreEntry>> = data
        .par_iter()
        .enumerate()
        .map(|(index, z)| {
            ggscore(model, params, z, reference, selection)
                .map(|score| ScoreEntry { index, score })
                .map_err(|e| e.at_sample(index))
        })
        .collect();
    scored.into_iter().collect()
}

/// Per-epoch parameters of one training run.
#[derive(Clone, Debug)]
pub struct TrainingSnapshots {
    epochs: Vec<ParamSet>,
}

impl TrainingSnapshots {
    pub fn new(epochs: Vec<ParamSet>) -> Result<Self> {
        if epochs.is_empty() {
            return Err(Error::InvalidConfig("no epoch snapshots".into()));
        }
        if epochs.iter().any(|p| !p.same_layout(&epochs[0])) {
            return Err(Error::ShapeMismatch(
                "snapshots have different layouts".into(),
            ));
        }
        Ok(Self { epochs })
    }

    pub fn from_run(run: &TrainRun) -> Result<Self> {
        Self::new(run.snapshots.clone())
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Parameters after epoch `e`, 1-based.
    pub fn epoch(&self, e: usize) -> Option<&ParamSet> {
        e.checked_sub(1).and_then(|i| self.epochs.get(i))
    }

    /// Parameters after the final epoch.
    pub fn theta_hat(&self) -> &ParamSet {
        self.epochs.last().expect("non-empty")
    }

    /// Parameters after the penultimate epoch, if there is one.
    pub fn theta_hat_prime(&self) -> Option<&ParamSet> {
        self.epoch(self.len().checked_sub(1)?)
    }
}
