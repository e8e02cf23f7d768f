//! How well one-step loss changes track leave-one-out retraining, measured on
//! a small two-class problem with a two-layer network.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss_change::{loss_change_retrain_all, one_step_loss_change_all};
use super::one_step_loss_change_estimate;
use super::score::{ggscore_batch, reference_vector};
use super::stats::{pearson, spearman};
use super::step::{Divisor, StepQuery};
use crate::data::synth_two_class;
use crate::error::{Error, Result};
use crate::model::TwoLayerNet;
use crate::nn::{train, LossKind, Optimizer, ParamSelection, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_samples: usize,
    pub input_dim: usize,
    pub hidden: usize,
    /// Distance between the two class means, in units of the noise scale.
    pub separation: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            input_dim: 10,
            hidden: 16,
            separation: 2.0,
            epochs: 10,
            batch_size: 20,
            lr: 0.1,
            seed: 0,
        }
    }
}

/// Largest `n_samples * epochs` a study will accept; the retrain oracle costs
/// `n_samples` full trainings.
pub const MAX_STUDY_COST: usize = 20_000;

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 || self.epochs < 2 {
            return Err(Error::InvalidConfig(
                "study needs at least 2 samples and 2 epochs".into(),
            ));
        }
        if self.n_samples.saturating_mul(self.epochs) > MAX_STUDY_COST {
            return Err(Error::TooLarge(format!(
                "{} samples x {} epochs exceeds the study budget of {MAX_STUDY_COST}",
                self.n_samples, self.epochs
            )));
        }
        self.train_config().validate()
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            optimizer: Optimizer::Mbgd,
            seed: self.seed,
        }
    }
}

/// Per-sample influence quantities and their correlations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfluenceReport {
    /// `epoch_oracle[e][k]`: exact one-step loss change of dropping sample
    /// `k` from a full-data step taken at the end of epoch `e + 1`.
    pub epoch_oracle: Vec<Vec<f64>>,
    /// Leave-one-out retraining loss change per sample.
    pub retrain: Vec<f64>,
    /// Retrain pairs whose final epoch still moved the loss by more than the
    /// convergence tolerance.
    pub unconverged: usize,
    /// First-order estimate of the last-epoch one-step change.
    pub estimate: Vec<f64>,
    /// GGscore at the penultimate epoch against the final-epoch data gradient.
    pub ggscore: Vec<f64>,
    /// Row/column names of the correlation matrices: `epoch_1 .. epoch_E, retrain`.
    pub labels: Vec<String>,
    pub pearson: Vec<Vec<f64>>,
    pub spearman: Vec<Vec<f64>>,
}

impl InfluenceReport {
    pub fn epochs(&self) -> usize {
        self.epoch_oracle.len()
    }

    /// Pearson correlation of each epoch's one-step changes with the
    /// retraining loss change.
    pub fn epoch_vs_retrain(&self) -> Vec<f64> {
        let r = self.labels.len() - 1;
        (0..self.epochs()).map(|e| self.pearson[e][r]).collect()
    }

    pub fn last_epoch_vs_retrain(&self) -> f64 {
        *self.epoch_vs_retrain().last().expect("at least two epochs")
    }

    /// Writes `sample_id,oracle,estimate,ggscore,retrain` rows for the final epoch.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_id", "oracle", "estimate", "ggscore", "retrain"])?;
        let last = self.epoch_oracle.last().expect("at least two epochs");
        for (k, oracle) in last.iter().enumerate() {
            w.write_record([
                k.to_string(),
                oracle.to_string(),
                self.estimate[k].to_string(),
                self.ggscore[k].to_string(),
                self.retrain[k].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Correlation summary as JSON.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "labels": self.labels,
            "pearson": self.pearson,
            "spearman": self.spearman,
            "epoch_vs_retrain": self.epoch_vs_retrain(),
            "last_epoch_vs_retrain": self.last_epoch_vs_retrain(),
            "unconverged": self.unconverged,
        })
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, &self.summary_json())?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}

fn matrix(cols: &[&[f64]], f: fn(&[f64], &[f64]) -> Result<f64>) -> Result<Vec<Vec<f64>>> {
    cols.iter()
        .map(|a| cols.iter().map(|b| f(a, b)).collect())
        .collect()
}

/// Trains a two-layer net on a synthetic two-class set and compares, for every
/// sample, the one-step loss change at each epoch with the loss change from
/// retraining without it.
pub fn correlation_study(cfg: &StudyConfig) -> Result<InfluenceReport> {
    cfg.validate()?;
    let data = synth_two_class(cfg.n_samples, cfg.input_dim, cfg.separation, cfg.seed)?;
    let net = TwoLayerNet::new(cfg.input_dim, cfg.hidden, LossKind::Logistic)?;
    let init = net.init_params(cfg.seed.wrapping_add(1));
    let tc = cfg.train_config();
    let run = train(&net, init.clone(), &data, &tc)?;

    let epoch_oracle = run
        .snapshots
        .iter()
        .map(|p| one_step_loss_change_all(&net, &data, p, &data, cfg.lr, Divisor::BMinus1))
        .collect::<Result<Vec<_>>>()?;

    let retrain_runs = loss_change_retrain_all(&net, &init, &data, &tc)?;
    let retrain: Vec<f64> = retrain_runs.iter().map(|r| r.delta).collect();
    let unconverged = retrain_runs.iter().filter(|r| !r.converged).count();

    let theta = run.snapshots.last().expect("epochs >= 2");
    let next = super::step::mbgd_step(&net, theta, &data, cfg.lr)?;
    let estimate = (0..data.len())
        .map(|k| {
            let q = StepQuery::new(&data, k, cfg.lr);
            one_step_loss_change_estimate(&net, &data, theta, &next, &q, ParamSelection::Full)
        })
        .collect::<Result<Vec<_>>>()?;

    let theta_prime = &run.snapshots[run.snapshots.len() - 2];
    let v = reference_vector(&net, theta, &data, ParamSelection::Full)?;
    let ggscore = ggscore_batch(&net, theta_prime, &data, &v, ParamSelection::Full)?
        .into_iter()
        .map(|e| e.score)
        .collect();

    let mut labels: Vec<String> = (1..=cfg.epochs).map(|e| format!("epoch_{e}")).collect();
    labels.push("retrain".into());
    let mut cols: Vec<&[f64]> = epoch_oracle.iter().map(Vec::as_slice).collect();
    cols.push(&retrain);
    let pearson_m = matrix(&cols, pearson)?;
    let spearman_m = matrix(&cols, spearman)?;

    Ok(InfluenceReport {
        epoch_oracle,
        retrain,
        unconverged,
        estimate,
        ggscore,
        labels,
        pearson: pearson_m,
        spearman: spearman_m,
    })
}
