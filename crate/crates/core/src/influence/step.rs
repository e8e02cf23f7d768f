//! One mini-batch gradient step and its leave-one-out counterpart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{grad_sum_by, per_sample_grad, Model, ParamSelection, ParamSet, SparseGrad};

/// Denominator of a counterfactual step that drops one sample from a batch of
/// size `B`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Divisor {
    /// Average over the `B - 1` remaining samples.
    #[default]
    BMinus1,
    /// Keep dividing by `B`, as if the dropped sample contributed zero.
    B,
}

impl Divisor {
    pub fn value(self, batch_size: usize) -> f64 {
        match self {
            Divisor::BMinus1 => (batch_size - 1) as f64,
            Divisor::B => batch_size as f64,
        }
    }
}

/// A batch, the position of the sample to drop, and the step parameters.
#[derive(Clone, Copy, Debug)]
pub struct StepQuery<'a, S> {
    pub batch: &'a [S],
    pub removed: usize,
    pub lr: f64,
    pub divisor: Divisor,
}

impl<'a, S> StepQuery<'a, S> {
    pub fn new(batch: &'a [S], removed: usize, lr: f64) -> Self {
        Self {
            batch,
            removed,
            lr,
            divisor: Divisor::BMinus1,
        }
    }

    pub fn with_divisor(mut self, divisor: Divisor) -> Self {
        self.divisor = divisor;
        self
    }

    fn check(&self) -> Result<()> {
        if self.batch.len() < 2 {
            return Err(Error::BatchTooSmall(self.batch.len()));
        }
        if self.removed >= self.batch.len() {
            return Err(Error::NotInBatch);
        }
        Ok(())
    }
}

impl<'a, S: PartialEq> StepQuery<'a, S> {
    /// Query that drops the first occurrence of `removed` from `batch`.
    pub fn for_sample(batch: &'a [S], removed: &S, lr: f64) -> Result<Self> {
        let k = batch
            .iter()
            .position(|z| z == removed)
            .ok_or(Error::NotInBatch)?;
        Ok(Self::new(batch, k, lr))
    }
}

/// `theta - (lr / B) * sum_z grad L(z, theta)` over the whole batch.
pub fn mbgd_step<M: Model>(
    model: &M,
    params: &ParamSet,
    batch: &[M::Sample],
    lr: f64,
) -> Result<ParamSet> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (sum, _) = grad_sum_by(
        model,
        params,
        batch.len(),
        |i| &batch[i],
        ParamSelection::Full,
    )?;
    let mut next = params.clone();
    next.add_scaled(&sum, -lr / batch.len() as f64)?;
    Ok(next)
}

/// The same step with `batch[q.removed]` left out and the sum divided by
/// `q.divisor`.
pub fn counterfactual_step<M: Model>(
    model: &M,
    params: &ParamSet,
    q: &StepQuery<'_, M::Sample>,
) -> Result<ParamSet> {
    q.check()?;
    let k = q.removed;
    let (sum, _) = grad_sum_by(
        model,
        params,
        q.batch.len() - 1,
        |i| &q.batch[if i < k { i } else { i + 1 }],
        ParamSelection::Full,
    )?;
    let mut next = params.clone();
    next.add_scaled(&sum, -q.lr / q.divisor.value(q.batch.len()))?;
    Ok(next)
}

/// `theta_k - theta` from the per-sample gradient `g_k` and the batch mean
/// `g_mean`, both taken at the pre-step parameters.
///
/// With `B - 1` this is `lr / (B - 1) * (g_k - g_mean)`; with `B` the mean
/// term cancels and it is `lr / B * g_k`.
pub fn closed_form_delta(
    g_k: &SparseGrad,
    g_mean: &SparseGrad,
    lr: f64,
    batch_size: usize,
    divisor: Divisor,
) -> Result<SparseGrad> {
    if batch_size < 2 {
        return Err(Error::BatchTooSmall(batch_size));
    }
    Ok(match divisor {
        Divisor::BMinus1 => {
            let mut d = g_k.clone();
            d.add_scaled(g_mean, -1.0);
            d.scaled(lr / (batch_size - 1) as f64)
        }
        Divisor::B => g_k.clone().scaled(lr / batch_size as f64),
    })
}

/// Closed-form `counterfactual_step - mbgd_step`, computed from gradients only.
pub fn param_delta_closed_form<M: Model>(
    model: &M,
    params: &ParamSet,
    q: &StepQuery<'_, M::Sample>,
) -> Result<SparseGrad> {
    q.check()?;
    gradient_delta(model, params, q, ParamSelection::Full)
}

pub(crate) fn gradient_delta<M: Model>(
    model: &M,
    params: &ParamSet,
    q: &StepQuery<'_, M::Sample>,
    selection: ParamSelection,
) -> Result<SparseGrad> {
    let g_k = per_sample_grad(model, params, &q.batch[q.removed], selection)?;
    let g_mean = match q.divisor {
        Divisor::BMinus1 => crate::nn::batch_grad(model, params, q.batch, selection)?,
        Divisor::B => SparseGrad::new(),
    };
    closed_form_delta(&g_k, &g_mean, q.lr, q.batch.len(), q.divisor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionRecord;
    use crate::model::BiasModel;
    use crate::nn::{LayoutBuilder, LossKind, ParamKey};

    fn targets(ys: &[f64]) -> Vec<InteractionRecord> {
        ys.iter()
            .enumerate()
            .map(|(k, &y)| InteractionRecord::new(0, 0, y, k as i64))
            .collect()
    }

    #[test]
    fn mbgd_bias_example() {
        let m = BiasModel::new(LossKind::SquaredError);
        let next = mbgd_step(&m, &m.params(0.0), &targets(&[1.0, 3.0]), 0.5).unwrap();
        assert_eq!(m.bias(&next), 1.0);
    }

    #[test]
    fn mbgd_zero_rate_and_duplicates() {
        let m = BiasModel::new(LossKind::SquaredError);
        let p = m.params(0.7);
        assert_eq!(
            m.bias(&mbgd_step(&m, &p, &targets(&[1.0, 3.0]), 0.0).unwrap()),
            0.7
        );
        let dup = mbgd_step(&m, &p, &targets(&[2.0, 2.0]), 0.1).unwrap();
        let single = mbgd_step(&m, &p, &targets(&[2.0]), 0.1).unwrap();
        assert_eq!(m.bias(&dup), m.bias(&single));
        assert!(matches!(
            mbgd_step(&m, &p, &[], 0.1),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn counterfactual_bias_examples() {
        let m = BiasModel::new(LossKind::SquaredError);
        let batch = targets(&[1.0, 3.0]);
        let p = m.params(0.0);
        let q = StepQuery::new(&batch, 0, 0.5);
        assert_eq!(m.bias(&counterfactual_step(&m, &p, &q).unwrap()), 1.5);
        let q = q.with_divisor(Divisor::B);
        assert_eq!(m.bias(&counterfactual_step(&m, &p, &q).unwrap()), 0.75);
    }

    #[test]
    fn counterfactual_on_duplicate_batch_keeps_one_copy() {
        let m = BiasModel::new(LossKind::SquaredError);
        let batch = vec![InteractionRecord::new(0, 0, 2.0, 5); 2];
        let p = m.params(0.3);
        let q = StepQuery::for_sample(&batch, &batch[1], 0.2).unwrap();
        assert_eq!(q.removed, 0);
        let cf = counterfactual_step(&m, &p, &q).unwrap();
        let one = mbgd_step(&m, &p, &batch[..1], 0.2).unwrap();
        assert_eq!(m.bias(&cf), m.bias(&one));
    }

    #[test]
    fn removed_must_be_in_batch() {
        let batch = targets(&[1.0, 3.0]);
        let other = InteractionRecord::new(0, 0, 9.0, 0);
        assert!(matches!(
            StepQuery::for_sample(&batch, &other, 0.1),
            Err(Error::NotInBatch)
        ));
        let m = BiasModel::new(LossKind::SquaredError);
        let q = StepQuery::new(&batch, 2, 0.1);
        assert!(matches!(
            counterfactual_step(&m, &m.params(0.0), &q),
            Err(Error::NotInBatch)
        ));
        let q = StepQuery::new(&batch[..1], 0, 0.1);
        assert!(matches!(
            counterfactual_step(&m, &m.params(0.0), &q),
            Err(Error::BatchTooSmall(1))
        ));
    }

    #[test]
    fn two_parameter_closed_form() {
        let mut b = LayoutBuilder::new();
        let w = b.group("w", 1, 2);
        let _ = b.build();
        let key = ParamKey::whole(w);
        let mut g1 = SparseGrad::new();
        g1.insert(key, vec![1.0, 0.0]);
        let mut g2 = SparseGrad::new();
        g2.insert(key, vec![0.0, 2.0]);
        let mut mean = g1.clone();
        mean.add_scaled(&g2, 1.0);
        mean.scale(0.5);
        let d = closed_form_delta(&g1, &mean, 0.1, 2, Divisor::BMinus1).unwrap();
        let v = d.get(&key).unwrap();
        assert!((v[0] - 0.05).abs() < 1e-15 && (v[1] + 0.1).abs() < 1e-15);

        // Direct simulation: theta = 0, full step uses the mean, the
        // counterfactual step uses g2 alone.
        let full = [-0.1 * 0.5, -0.1 * 1.0];
        let cf = [0.0, -0.1 * 2.0];
        assert!((cf[0] - full[0] - v[0]).abs() < 1e-15);
        assert!((cf[1] - full[1] - v[1]).abs() < 1e-15);

        let zero = closed_form_delta(&mean, &mean, 0.1, 2, Divisor::BMinus1).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let scaled = closed_form_delta(&g1, &mean, 0.3, 2, Divisor::BMinus1).unwrap();
        assert!(scaled.max_abs_diff(&d.clone().scaled(3.0)) < 1e-15);
    }

    #[test]
    fn closed_form_matches_bias_steps() {
        let m = BiasModel::new(LossKind::SquaredError);
        let batch = targets(&[1.0, 3.0, 4.0]);
        let p = m.params(0.25);
        for divisor in [Divisor::BMinus1, Divisor::B] {
            for k in 0..3 {
                let q = StepQuery::new(&batch, k, 0.4).with_divisor(divisor);
                let cf = counterfactual_step(&m, &p, &q).unwrap();
                let next = mbgd_step(&m, &p, &batch, 0.4).unwrap();
                let d = param_delta_closed_form(&m, &p, &q).unwrap();
                let want = m.bias(&cf) - m.bias(&next);
                assert!((d.get(&m.key()).unwrap()[0] - want).abs() < 1e-15);
            }
        }
    }
}
