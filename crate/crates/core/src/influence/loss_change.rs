//! Loss change from dropping one training sample: the exact one-step value,
//! its first-order estimate, and the full-retraining value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::step::{counterfactual_step, gradient_delta, mbgd_step, Divisor, StepQuery};
use crate::error::{Error, Result};
use crate::nn::{
    batch_grad, dataset_loss, grad_sum_by, per_sample_grad, train, train_excluding, Model,
    ParamSelection, ParamSet, SparseGrad, TrainConfig,
};

/// `L(D, theta_k') - L(D, theta')` where `theta'` is the batch step from
/// `params` and `theta_k'` the same step without `batch[q.removed]`.
pub fn one_step_loss_change_oracle<M: Model>(
    model: &M,
    data: &[M::Sample],
    params: &ParamSet,
    q: &StepQuery<'_, M::Sample>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let with_k = counterfactual_step(model, params, q)?;
    let next = mbgd_step(model, params, q.batch, q.lr)?;
    Ok(dataset_loss(model, &with_k, data)? - dataset_loss(model, &next, data)?)
}

/// First-order estimate `g(D, next) . (theta_k' - theta')` of the one-step
/// loss change, with the parameter delta in closed form.
///
/// `next` must be `mbgd_step(params, q.batch, q.lr)`. Under
/// [`ParamSelection::Selected`] every gradient is restricted to the selected
/// support before the dot product.
pub fn one_step_loss_change_estimate<M: Model>(
    model: &M,
    data: &[M::Sample],
    params: &ParamSet,
    next: &ParamSet,
    q: &StepQuery<'_, M::Sample>,
    selection: ParamSelection,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let delta = gradient_delta(model, params, q, selection)?;
    let v = batch_grad(model, next, data, selection)?;
    Ok(v.dot(&delta))
}

/// Exact one-step loss changes for every sample of `batch`, sharing one
/// gradient pass.
///
/// Each counterfactual step is `params - lr/divisor * (G - g_k)` with `G` the
/// batch gradient sum, which is the step over the remaining samples.
pub fn one_step_loss_change_all<M: Model>(
    model: &M,
    data: &[M::Sample],
    params: &ParamSet,
    batch: &[M::Sample],
    lr: f64,
    divisor: Divisor,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch.len() < 2 {
        return Err(Error::BatchTooSmall(batch.len()));
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
    let base = dataset_loss(model, &next, data)?;
    let scale = -lr / divisor.value(batch.len());
    batch
        .par_iter()
        .map(|z| {
            let mut rest: SparseGrad = sum.clone();
            rest.add_scaled(
                &per_sample_grad(model, params, z, ParamSelection::Full)?,
                -1.0,
            );
            let mut p = params.clone();
            p.add_scaled(&rest, scale)?;
            Ok(dataset_loss(model, &p, data)? - base)
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .enumerate()
        .map(|(k, r)| r.map_err(|e| e.at_sample(k)))
        .collect()
}

/// Retraining loss change and whether both runs looked converged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainLossChange {
    pub delta: f64,
    pub converged: bool,
}

/// Final-epoch loss decrease above which a run is flagged as not converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;

fn looks_converged(epoch_losses: &[f64]) -> bool {
    match epoch_losses {
        [.., prev, last] => prev - last <= CONVERGENCE_TOL,
        _ => false,
    }
}

/// `L(D, theta_hat_k) - L(D, theta_hat)`: trains from `init` on all of `data`
/// and on `data` without sample `removed`, with the same seed and batch
/// schedule, and compares the full-data losses.
pub fn loss_change_retrain_oracle<M: Model>(
    model: &M,
    init: &ParamSet,
    data: &[M::Sample],
    removed: usize,
    cfg: &TrainConfig,
) -> Result<RetrainLossChange> {
    let full = train(model, init.clone(), data, cfg)?;
    retrain_against(
        model,
        init,
        data,
        removed,
        cfg,
        &full.params,
        looks_converged(&full.epoch_losses),
    )
}

/// [`loss_change_retrain_oracle`] for every sample, training the full-data
/// reference once.
pub fn loss_change_retrain_all<M: Model>(
    model: &M,
    init: &ParamSet,
    data: &[M::Sample],
    cfg: &TrainConfig,
) -> Result<Vec<RetrainLossChange>> {
    let full = train(model, init.clone(), data, cfg)?;
    let ok = looks_converged(&full.epoch_losses);
    (0..data.len())
        .into_par_iter()
        .map(|k| {
            retrain_against(model, init, data, k, cfg, &full.params, ok).map_err(|e| e.at_sample(k))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn retrain_against<M: Model>(
    model: &M,
    init: &ParamSet,
    data: &[M::Sample],
    removed: usize,
    cfg: &TrainConfig,
    reference: &ParamSet,
    reference_converged: bool,
) -> Result<RetrainLossChange> {
    if data.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    if removed >= data.len() {
        return Err(Error::NotInBatch);
    }
    let without = train_excluding(model, init.clone(), data, cfg, Some(removed))?;
    let delta = dataset_loss(model, &without.params, data)? - dataset_loss(model, reference, data)?;
    Ok(RetrainLossChange {
        delta,
        converged: reference_converged && looks_converged(&without.epoch_losses),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionRecord;
    use crate::model::BiasModel;
    use crate::nn::{LossKind, Optimizer};

    fn targets(ys: &[f64]) -> Vec<InteractionRecord> {
        ys.iter()
            .enumerate()
            .map(|(k, &y)| InteractionRecord::new(0, 0, y, k as i64))
            .collect()
    }

    fn gd(epochs: usize, batch: usize) -> TrainConfig {
        TrainConfig {
            lr: 0.5,
            batch_size: batch,
            epochs,
            optimizer: Optimizer::Mbgd,
            seed: 7,
        }
    }

    #[test]
    fn bias_oracle_and_estimate() {
        let m = BiasModel::new(LossKind::SquaredError);
        let d = targets(&[1.0, 3.0]);
        let p = m.params(0.0);
        let q = StepQuery::new(&d, 0, 0.5);
        let oracle = one_step_loss_change_oracle(&m, &d, &p, &q).unwrap();
        assert!((oracle + 0.375).abs() < 1e-15);
        let next = mbgd_step(&m, &p, &d, 0.5).unwrap();
        assert_eq!(m.bias(&next), 1.0);
        let est =
            one_step_loss_change_estimate(&m, &d, &p, &next, &q, ParamSelection::Full).unwrap();
        assert!((est + 0.5).abs() < 1e-15);
        // The quadratic remainder is 0.5 * delta^2 with delta = 0.5.
        assert!((oracle - est - 0.125).abs() < 1e-15);
    }

    #[test]
    fn mean_gradient_sample_changes_nothing() {
        let m = BiasModel::new(LossKind::SquaredError);
        let d = targets(&[1.0, 2.0, 3.0]);
        let p = m.params(0.4);
        let q = StepQuery::new(&d, 1, 0.3);
        assert!(one_step_loss_change_oracle(&m, &d, &p, &q).unwrap().abs() < 1e-15);
        let next = mbgd_step(&m, &p, &d, 0.3).unwrap();
        assert!(
            one_step_loss_change_estimate(&m, &d, &p, &next, &q, ParamSelection::Full)
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn zero_rate_and_stationary_point() {
        let m = BiasModel::new(LossKind::SquaredError);
        let d = targets(&[1.0, 3.0]);
        let p = m.params(0.0);
        let q = StepQuery::new(&d, 0, 0.0);
        assert_eq!(one_step_loss_change_oracle(&m, &d, &p, &q).unwrap(), 0.0);
        // next sits at the minimizer of D, so the estimate's gradient is zero.
        let q = StepQuery::new(&d, 0, 0.5);
        let at_min = m.params(2.0);
        let est =
            one_step_loss_change_estimate(&m, &d, &p, &at_min, &q, ParamSelection::Full).unwrap();
        assert_eq!(est, 0.0);
    }

    #[test]
    fn empty_dataset() {
        let m = BiasModel::new(LossKind::SquaredError);
        let d = targets(&[1.0, 3.0]);
        let q = StepQuery::new(&d, 0, 0.5);
        assert!(matches!(
            one_step_loss_change_oracle(&m, &[], &m.params(0.0), &q),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn shared_pass_matches_direct_oracle() {
        let m = BiasModel::new(LossKind::SquaredError);
        let d = targets(&[1.0, 3.0, 4.0, -2.0]);
        let p = m.params(0.1);
        for divisor in [Divisor::BMinus1, Divisor::B] {
            let all = one_step_loss_change_all(&m, &d, &p, &d, 0.2, divisor).unwrap();
            for (k, v) in all.iter().enumerate() {
                let q = StepQuery::new(&d, k, 0.2).with_divisor(divisor);
                let direct = one_step_loss_change_oracle(&m, &d, &p, &q).unwrap();
                assert!((v - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn retrain_two_points() {
        let m = BiasModel::new(LossKind::SquaredError);
        let d = targets(&[1.0, 3.0]);
        let r = loss_change_retrain_oracle(&m, &m.params(0.0), &d, 1, &gd(200, 2)).unwrap();
        assert!((r.delta - 0.5).abs() < 1e-9, "{}", r.delta);
        assert!(r.converged);
    }

    #[test]
    fn retrain_duplicate_at_the_mean() {
        let m = BiasModel::new(LossKind::SquaredError);
        let d = targets(&[1.0, 2.0, 2.0, 3.0]);
        let r = loss_change_retrain_oracle(&m, &m.params(0.0), &d, 1, &gd(200, 4)).unwrap();
        assert!(r.delta.abs() < 1e-6, "{}", r.delta);
    }

    #[test]
    fn retrain_singleton_is_an_error() {
        let m = BiasModel::new(LossKind::SquaredError);
        let d = targets(&[1.0]);
        assert!(loss_change_retrain_oracle(&m, &m.params(0.0), &d, 0, &gd(5, 2)).is_err());
    }

    #[test]
    fn short_training_is_flagged() {
        let m = BiasModel::new(LossKind::SquaredError);
        let d = targets(&[10.0, 30.0]);
        let mut cfg = gd(2, 2);
        cfg.lr = 0.01;
        let r = loss_change_retrain_oracle(&m, &m.params(0.0), &d, 1, &cfg).unwrap();
        assert!(!r.converged);
    }
}
