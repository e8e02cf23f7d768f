use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::{
    ggscore_batch, reference_vector, ReferenceVector, ScoreEntry, TrainingSnapshots,
};
use crate::nn::{Model, ParamSelection, ParamSet};

/// How many samples to keep, split between the two ends of the score order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub k: usize,
    pub k_left: usize,
    pub k_right: usize,
}

impl SelectionPlan {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            k_left: k / 2,
            k_right: k.div_ceil(2),
        }
    }

    /// Keep count for one replay stage: `capacity - incoming` by default, or
    /// `round(ratio * capacity)` when a replay ratio is given.
    pub fn for_stage(capacity: usize, incoming: usize, ratio: Option<f64>) -> Result<Self> {
        let k = match ratio {
            None => capacity
                .checked_sub(incoming)
                .ok_or(Error::CapacityExceeded {
                    capacity,
                    size: incoming,
                })?,
            Some(r) if (0.0..=1.0).contains(&r) => (r * capacity as f64).round() as usize,
            Some(r) => {
                return Err(Error::InvalidConfig(format!(
                    "replay ratio must lie in [0, 1], got {r}"
                )))
            }
        };
        Ok(Self::new(k))
    }
}

/// Indices of the `floor(K/2)` lowest and `ceil(K/2)` highest scores, in
/// ascending index order. Ties are ordered by index, so the low end prefers
/// early indices and the high end late ones.
pub fn select_extreme(scores: &[ScoreEntry], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::KTooLarge { k, n: scores.len() });
    }
    if let Some(bad) = scores.iter().find(|e| !e.score.is_finite()) {
        return Err(Error::NonFiniteScore(bad.index));
    }
    let mut order: Vec<&ScoreEntry> = scores.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.index.cmp(&b.index)));
    let plan = SelectionPlan::new(k);
    let mut picked: Vec<usize> = order[..plan.k_left]
        .iter()
        .chain(&order[order.len() - plan.k_right..])
        .map(|e| e.index)
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Keeps the `k` most extreme samples of `data` by GGscore at `theta_prime`
/// against `reference`.
pub fn megg_select_with<M: Model>(
    model: &M,
    data: &[M::Sample],
    theta_prime: &ParamSet,
    reference: &ReferenceVector,
    k: usize,
    selection: ParamSelection,
) -> Result<Vec<usize>> {
    if k > data.len() {
        return Err(Error::KTooLarge { k, n: data.len() });
    }
    let scores = ggscore_batch(model, theta_prime, data, reference, selection)?;
    select_extreme(&scores, k)
}

/// MEGG with the default snapshot choice: scores at the penultimate epoch
/// against the data gradient at the final epoch.
pub fn megg_select<M: Model>(
    model: &M,
    data: &[M::Sample],
    snapshots: &TrainingSnapshots,
    k: usize,
    selection: ParamSelection,
) -> Result<Vec<usize>> {
    let theta_prime = snapshots.theta_hat_prime().ok_or_else(|| {
        Error::SchemeUnavailable('A', "needs at least two epoch snapshots".into())
    })?;
    let v = reference_vector(model, snapshots.theta_hat(), data, selection)?;
    megg_select_with(model, data, theta_prime, &v, k, selection)
}
