//! Sample influence: what happens to the training loss when one sample is
//! left out, either for a single gradient step or for a whole training run,
//! and the GGscore that ranks samples by it.
//!
//! For a constant-rate step over a batch of `B` samples, leaving out `z_k`
//! moves the parameters by exactly `lr / (B - 1) * (g_k - g_mean)`, so to
//! first order the loss change is the dot product of that delta with the
//! data gradient at the post-step parameters.

mod loss_change;
mod score;
mod stats;
mod step;
mod study;

pub use loss_change::{
    loss_change_retrain_all, loss_change_retrain_oracle, one_step_loss_change_all,
    one_step_loss_change_estimate, one_step_loss_change_oracle, RetrainLossChange, CONVERGENCE_TOL,
};
pub use score::{
    ggscore, ggscore_batch, reference_vector, ReferenceVector, ScoreEntry, TrainingSnapshots,
};
pub use stats::{average_ranks, pearson, spearman};
pub use step::{
    closed_form_delta, counterfactual_step, mbgd_step, param_delta_closed_form, Divisor, StepQuery,
};
pub use study::{correlation_study, InfluenceReport, StudyConfig, MAX_STUDY_COST};
