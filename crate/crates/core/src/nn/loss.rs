use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output head of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// Rating regression, `(pred - y)^2 / 2`.
    SquaredError,
    /// Binary classification on a logit.
    Logistic,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_target(target: f64, kind: LossKind) -> Result<()> {
    if kind == LossKind::Logistic && target != 0.0 && target != 1.0 {
        return Err(Error::InvalidTarget(target));
    }
    Ok(())
}

/// Per-sample loss. For [`LossKind::Logistic`] `prediction` is a logit.
pub fn loss(prediction: f64, target: f64, kind: LossKind) -> Result<f64> {
    check_target(target, kind)?;
    Ok(match kind {
        LossKind::SquaredError => {
            let r = prediction - target;
            0.5 * r * r
        }
        LossKind::Logistic => softplus(prediction) - target * prediction,
    })
}

/// `d loss / d prediction`.
pub fn loss_grad(prediction: f64, target: f64, kind: LossKind) -> Result<f64> {
    check_target(target, kind)?;
    Ok(match kind {
        LossKind::SquaredError => prediction - target,
        LossKind::Logistic => sigmoid(prediction) - target,
    })
}
