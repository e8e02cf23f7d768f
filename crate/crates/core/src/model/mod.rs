//! Recommendation backbones and small analytic models.

mod layers;
mod recommender;
pub mod toy;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Model, ParamSet};

pub use layers::{bi_interaction, cross_layer};
pub use recommender::{build_model, ArchDescriptor, Backbone, RecTape, Recommender};
pub use toy::{BiasModel, FeatureSample, TwoLayerNet};

/// Input of a model's last fully connected layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn extract_feature<M: Model>(
    model: &M,
    params: &ParamSet,
    sample: &M::Sample,
) -> Result<FeatureVector> {
    model.feature(params, sample).map(FeatureVector)
}
