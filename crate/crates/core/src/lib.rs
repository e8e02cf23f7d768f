//! Influence-guided experience replay for incrementally trained
//! recommenders.
//!
//! The crate trains small neural recommenders from scratch, scores past
//! interactions by how their gradient aligns with the data gradient, keeps the
//! most extreme ones in a bounded reservoir, and runs the staged benchmark that
//! compares this against other replay strategies.

pub mod data;
pub mod error;
pub mod influence;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod protocol;
pub mod replay;

pub use data::{BlockSet, DriftConfig, InteractionRecord, LabelRule};
pub use error::{Error, Result};
pub use influence::{ReferenceVector, ScoreEntry, TrainingSnapshots};
pub use model::{ArchDescriptor, Backbone, Recommender};
pub use nn::{LossKind, Model, Optimizer, ParamSelection, ParamSet, SparseGrad, TrainConfig};
pub use protocol::{ProtocolConfig, RunReport, Scheme, StageReport};
pub use replay::{Reservoir, SelectionPlan, Strategy};
