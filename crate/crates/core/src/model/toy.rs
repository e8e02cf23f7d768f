//! Small models with closed-form behavior, used to check the influence
//! machinery against hand computations.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{affine, init_uniform, relu_in_place};
use crate::data::InteractionRecord;
use crate::error::{Error, Result};
use crate::nn::params::dot;
use crate::nn::{
    GroupId, Layout, LayoutBuilder, LossKind, Model, ParamKey, ParamSelection, ParamSet, Sample,
    SparseGrad,
};

/// `prediction = b`, ignoring the record's ids.
///
/// Under squared error the dataset loss is an exact quadratic in `b`, so every
/// Taylor remainder is known in closed form.
#[derive(Clone, Debug)]
pub struct BiasModel {
    head: LossKind,
    layout: Arc<Layout>,
    bias: GroupId,
}

impl BiasModel {
    pub fn new(head: LossKind) -> Self {
        let mut b = LayoutBuilder::new();
        let bias = b.group("dense_last_b", 1, 1);
        Self {
            head,
            layout: b.build(),
            bias,
        }
    }

    pub fn params(&self, b: f64) -> ParamSet {
        let mut p = ParamSet::zeros(self.layout.clone());
        p.get_mut(self.bias).as_mut_slice()[0] = b;
        p
    }

    pub fn bias(&self, params: &ParamSet) -> f64 {
        params.get(self.bias).get(0, 0)
    }

    pub fn key(&self) -> ParamKey {
        ParamKey::whole(self.bias)
    }
}

impl Model for BiasModel {
    type Sample = InteractionRecord;
    type Tape = ();

    fn head(&self) -> LossKind {
        self.head
    }

    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn forward_tape(&self, params: &ParamSet, _: &InteractionRecord) -> Result<(f64, ())> {
        Ok((params.get(self.bias).get(0, 0), ()))
    }

    fn backward(
        &self,
        _: &ParamSet,
        _: &InteractionRecord,
        _: &(),
        upstream: f64,
        _: ParamSelection,
        grad: &mut SparseGrad,
    ) {
        grad.slot(ParamKey::whole(self.bias), 1)[0] += upstream;
    }

    fn feature(&self, _: &ParamSet, _: &InteractionRecord) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
}

/// A dense input vector with a target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample for FeatureSample {
    fn target(&self, kind: LossKind) -> Result<f64> {
        if kind == LossKind::Logistic && self.y != 0.0 && self.y != 1.0 {
            return Err(Error::InvalidTarget(self.y));
        }
        Ok(self.y)
    }
}

/// Two-layer perceptron on dense inputs: `dense_last(relu(dense_0 x))`.
///
/// There are no embeddings, so the selected parameters are just the final layer.
#[derive(Clone, Debug)]
pub struct TwoLayerNet {
    head: LossKind,
    input_dim: usize,
    layout: Arc<Layout>,
    w0: GroupId,
    b0: GroupId,
    w1: GroupId,
    b1: GroupId,
}

pub struct NetTape {
    hidden: Vec<f64>,
}

impl TwoLayerNet {
    pub fn new(input_dim: usize, hidden: usize, head: LossKind) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidArch(
                "two-layer net needs positive input and hidden widths".into(),
            ));
        }
        let mut b = LayoutBuilder::new();
        let w0 = b.group("dense_0_W", hidden, input_dim);
        let b0 = b.group("dense_0_b", 1, hidden);
        let w1 = b.group("dense_last_W", 1, hidden);
        let b1 = b.group("dense_last_b", 1, 1);
        Ok(Self {
            head,
            input_dim,
            layout: b.build(),
            w0,
            b0,
            w1,
            b1,
        })
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::zeros(self.layout.clone());
        init_uniform(p.get_mut(self.w0), self.input_dim, &mut rng);
        let h = self.layout.shape(self.w1).1;
        init_uniform(p.get_mut(self.w1), h, &mut rng);
        p
    }
}

impl Model for TwoLayerNet {
    type Sample = FeatureSample;
    type Tape = NetTape;

    fn head(&self) -> LossKind {
        self.head
    }

    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn forward_tape(&self, params: &ParamSet, s: &FeatureSample) -> Result<(f64, NetTape)> {
        if s.x.len() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, net expects {}",
                s.x.len(),
                self.input_dim
            )));
        }
        let mut hidden = Vec::new();
        affine(
            params.get(self.w0),
            params.get(self.b0).as_slice(),
            &s.x,
            &mut hidden,
        );
        relu_in_place(&mut hidden);
        let pred = dot(params.get(self.w1).as_slice(), &hidden) + params.get(self.b1).get(0, 0);
        Ok((pred, NetTape { hidden }))
    }

    fn backward(
        &self,
        params: &ParamSet,
        s: &FeatureSample,
        tape: &NetTape,
        upstream: f64,
        selection: ParamSelection,
        grad: &mut SparseGrad,
    ) {
        grad.add_slice(ParamKey::whole(self.w1), &tape.hidden, upstream);
        grad.slot(ParamKey::whole(self.b1), 1)[0] += upstream;
        if selection == ParamSelection::Selected {
            return;
        }
        let w1 = params.get(self.w1).as_slice();
        let h = tape.hidden.len();
        let n = self.input_dim;
        let gw = grad.slot(ParamKey::whole(self.w0), h * n);
        let mut dz = vec![0.0; h];
        for r in 0..h {
            if tape.hidden[r] > 0.0 {
                dz[r] = upstream * w1[r];
                for (dv, &x) in gw[r * n..(r + 1) * n].iter_mut().zip(&s.x) {
                    *dv += dz[r] * x;
                }
            }
        }
        let gb = grad.slot(ParamKey::whole(self.b0), h);
        for (dv, g) in gb.iter_mut().zip(&dz) {
            *dv += g;
        }
    }

    fn feature(&self, params: &ParamSet, s: &FeatureSample) -> Result<Vec<f64>> {
        self.forward_tape(params, s).map(|(_, t)| t.hidden)
    }
}
