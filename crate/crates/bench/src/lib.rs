//! Shared fixtures for the criterion benchmarks in `benches/`.

use drift_replay::data::{synth_drift, DriftConfig};
use drift_replay::{ArchDescriptor, Backbone, InteractionRecord, ParamSet, Recommender};

/// A Wide&Deep model at embedding size `d`, its initial parameters, and `n`
/// drifting interactions over the default synthetic catalogue.
pub fn scoring_fixture(d: usize, n: usize) -> (Recommender, ParamSet, Vec<InteractionRecord>) {
    let synth = DriftConfig {
        num_records: n,
        ..DriftConfig::default()
    };
    let data = synth_drift(&synth, 0).expect("default synthetic config is valid");
    let mut arch = ArchDescriptor::new(Backbone::WideDeep, synth.num_users, synth.num_items);
    arch.embedding_dim = d;
    let model = Recommender::new(arch).expect("valid architecture");
    let params = model.init_params(0);
    (model, params, data)
}
