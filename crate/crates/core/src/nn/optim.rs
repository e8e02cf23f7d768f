use super::params::{ParamSet, SparseGrad};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// `theta' = theta - lr * grad` on the gradient's support.
pub fn apply_mbgd(params: &ParamSet, grad: &SparseGrad, lr: f64) -> Result<ParamSet> {
    let mut out = params.clone();
    out.add_scaled(grad, -lr)?;
    Ok(out)
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
}

impl AdamState {
    pub fn fresh(params: &ParamSet) -> Self {
        Self {
            m: ParamSet::zeros(params.layout().clone()),
            v: ParamSet::zeros(params.layout().clone()),
            t: 0,
        }
    }
}

/// Adam with the usual defaults. Moments are updated lazily: only entries on
/// the gradient's support move, while bias correction uses the global step.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: AdamState,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Self {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            state: AdamState::fresh(params),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grad: &SparseGrad) -> Result<()> {
        if !params.same_layout(&self.state.m) {
            return Err(Error::ShapeMismatch(
                "optimizer state does not match parameters".into(),
            ));
        }
        for (key, g) in grad.iter() {
            params.check_slice(key, g.len())?;
        }
        self.state.t += 1;
        let t = self.state.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (key, g) in grad.iter() {
            let m = self.state.m.slice_mut_unchecked(key);
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
            }
            let v = self.state.v.slice_mut_unchecked(key);
            for (vi, &gi) in v.iter_mut().zip(g) {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            }
            let m = self.state.m.slice(key)?;
            let v = self.state.v.slice(key)?;
            let p = params.slice_mut_unchecked(key);
            for ((pi, &mi), &vi) in p.iter_mut().zip(m).zip(v) {
                let m_hat = mi / c1;
                let v_hat = vi / c2;
                *pi -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Functional form of one Adam step.
pub fn apply_adam(
    params: &ParamSet,
    grad: &SparseGrad,
    lr: f64,
    state: AdamState,
) -> Result<(ParamSet, AdamState)> {
    let mut adam = Adam::new(params, lr);
    adam.state = state;
    let mut out = params.clone();
    adam.step(&mut out, grad)?;
    Ok((out, adam.state))
}
