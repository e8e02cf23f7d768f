//! The staged replay loop.
//!
//! Blocks `0..R` fill the reservoir and train the stage-0 model. Stage `s`
//! then receives block `b = R - 1 + s`: a replay strategy keeps part of the
//! reservoir using the model trained on it, merges the new block, trains a
//! fresh model on the result and evaluates it on the blocks after `b`.
//! Fine-tuning warm-starts from the previous model on block `b` alone, and
//! full-batch training starts from scratch on blocks `0..=b`. The last stage
//! has no later blocks, so it only updates the reservoir.

use std::time::Instant;

use log::{debug, info};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    id_extent, load_csv, load_movielens, read_blocks, split_blocks, synth_drift, BlockSet,
    InteractionRecord,
};
use crate::error::{Error, Result};
use crate::influence::{ggscore_batch, ScoreEntry, TrainingSnapshots};
use crate::metrics::{auc, rmse};
use crate::model::Recommender;
use crate::nn::{predict_all, sigmoid, train, LossKind, Model, ParamSet, TrainRun};
use crate::replay::{
    gdumb_select, icarl_select, mir_select, select_extreme, take_indices, Reservoir, SelectionPlan,
    Strategy,
};

use super::config::{DataSource, EvalMode, ProtocolConfig};
use super::report::{BlockEval, RunReport, SeedReport, StageReport, StageTiming};
use super::scheme::scheme_resolve;

/// Blocks ready for the stage loop, plus the embedding table sizes.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub blocks: BlockSet,
    pub num_users: usize,
    pub num_items: usize,
}

/// Loads or generates the corpus and cuts it into `cfg.n_blocks` blocks.
/// Binary tasks drop records without a label first.
pub fn prepare_data(cfg: &ProtocolConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let keep = |r: &InteractionRecord| cfg.model.head != LossKind::Logistic || r.label.is_some();
    let blocks = match &cfg.source {
        DataSource::Prepared(dir) => {
            let blocks = read_blocks(dir)?;
            if blocks.len() != cfg.n_blocks {
                return Err(Error::InvalidConfig(format!(
                    "{} holds {} blocks but n_blocks = {}",
                    dir.display(),
                    blocks.len(),
                    cfg.n_blocks
                )));
            }
            let blocks: Vec<Vec<_>> = blocks
                .into_inner()
                .into_iter()
                .map(|b| b.into_iter().filter(keep).collect())
                .collect();
            if let Some(k) = blocks.iter().position(Vec::is_empty) {
                return Err(Error::InvalidConfig(format!("block {k} is empty")));
            }
            BlockSet::from_blocks(blocks)
        }
        source => {
            let mut records = match source {
                DataSource::Synthetic => synth_drift(&cfg.synth, cfg.synth_seed)?,
                DataSource::MovieLens(p) => load_movielens(p, cfg.label_rule)?.records,
                DataSource::Csv(p) => load_csv(p, cfg.label_rule)?.records,
                DataSource::Prepared(_) => unreachable!(),
            };
            records.retain(keep);
            split_blocks(records, cfg.n_blocks)?
        }
    };
    let (num_users, num_items) = blocks
        .blocks()
        .iter()
        .map(|b| id_extent(b))
        .fold((0, 0), |(u, i), (bu, bi)| (u.max(bu), i.max(bi)));
    Ok(PreparedData {
        blocks,
        num_users,
        num_items,
    })
}

/// Runs every configured seed.
pub fn run_protocol(cfg: &ProtocolConfig) -> Result<RunReport> {
    let data = prepare_data(cfg)?;
    run_prepared(cfg, &data)
}

/// Like [`run_protocol`] on already prepared blocks.
pub fn run_prepared(cfg: &ProtocolConfig, data: &PreparedData) -> Result<RunReport> {
    let seeds = cfg
        .seeds
        .iter()
        .map(|&seed| run_seed(cfg, data, seed))
        .collect::<Result<_>>()?;
    Ok(RunReport {
        strategy: cfg.strategy.to_string(),
        scheme: cfg.scheme.to_string(),
        seeds,
    })
}

/// Every stage for one seed.
pub fn run_seed(cfg: &ProtocolConfig, data: &PreparedData, seed: u64) -> Result<SeedReport> {
    let mut runner = Runner::new(cfg, data, seed)?;
    let mut stages = Vec::with_capacity(runner.num_stages());
    for s in 1..=runner.num_stages() {
        let report = runner.stage(s).map_err(|e| e.at_stage(s))?;
        if report.has_metrics() {
            info!(
                "seed {seed} stage {s}: trained on {} records, rmse {:.4}, auc {:.4}",
                report.train_size,
                report.rmse(),
                report.auc()
            );
        } else {
            info!("seed {seed} stage {s}: reservoir update only");
        }
        stages.push(report);
    }
    Ok(SeedReport { seed, stages })
}

/// GGscore of one reservoir record at a stage's selection point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub index: usize,
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: i64,
    pub score: f64,
    /// Whether the extreme-score rule keeps it.
    pub kept: bool,
}

/// Replays stages `1..stage` under the configured replay strategy and returns
/// the GGscores of the reservoir at stage `stage`, under the configured
/// scheme and parameter selection.
pub fn stage_scores(
    cfg: &ProtocolConfig,
    data: &PreparedData,
    seed: u64,
    stage: usize,
) -> Result<Vec<ScoredRecord>> {
    if !cfg.strategy.is_replay() {
        return Err(Error::InvalidConfig(format!(
            "strategy {} keeps no reservoir to score",
            cfg.strategy
        )));
    }
    let mut runner = Runner::new(cfg, data, seed)?;
    if stage == 0 || stage > runner.num_stages() {
        return Err(Error::InvalidConfig(format!(
            "stage must lie in 1..={}, got {stage}",
            runner.num_stages()
        )));
    }
    for s in 1..stage {
        runner.stage(s).map_err(|e| e.at_stage(s))?;
    }
    let scores = runner.megg_scores(stage).map_err(|e| e.at_stage(stage))?;
    let k = runner.keep_count(stage)?;
    let kept = select_extreme(&scores, k)?;
    let mut flags = vec![false; scores.len()];
    kept.into_iter().for_each(|i| flags[i] = true);
    Ok(scores
        .iter()
        .map(|e| {
            let r = &runner.reservoir.records()[e.index];
            ScoredRecord {
                index: e.index,
                user: r.user,
                item: r.item,
                rating: r.rating,
                timestamp: r.timestamp,
                score: e.score,
                kept: flags[e.index],
            }
        })
        .collect())
}

/// Independent seed for one purpose at one stage of a run.
fn stream_seed(seed: u64, stage: usize, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64 * 8 + purpose);
    rng.next_u64()
}

const INIT: u64 = 0;
const SHUFFLE: u64 = 1;
const SAMPLE: u64 = 2;

struct Runner<'a> {
    cfg: &'a ProtocolConfig,
    blocks: &'a BlockSet,
    model: Recommender,
    seed: u64,
    reservoir: Reservoir,
    /// Model after the last training, with its epoch snapshots.
    current: Option<TrainRun>,
    max_train_ts: i64,
}

fn max_ts(records: &[InteractionRecord]) -> i64 {
    records
        .iter()
        .map(|r| r.timestamp)
        .max()
        .unwrap_or(i64::MIN)
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ProtocolConfig, data: &'a PreparedData, seed: u64) -> Result<Self> {
        let blocks = &data.blocks;
        let r = cfg.reservoir_blocks;
        if blocks.len() <= r {
            return Err(Error::InvalidConfig(format!(
                "{} blocks leave no incremental stage after {r} reservoir blocks",
                blocks.len()
            )));
        }
        let model = Recommender::new(cfg.model.arch(data.num_users, data.num_items))?;
        let initial = blocks.concat(0..r);
        let capacity = initial.len();
        let reservoir = Reservoir::new(initial, capacity)?;
        let mut runner = Self {
            cfg,
            blocks,
            model,
            seed,
            reservoir,
            current: None,
            max_train_ts: i64::MIN,
        };
        if cfg.strategy != Strategy::FullBatch {
            let data = runner.reservoir.records().to_vec();
            runner.current = Some(runner.fit(None, &data, 0).map_err(|e| e.at_stage(0))?);
            runner.max_train_ts = max_ts(&data);
        }
        Ok(runner)
    }

    fn num_stages(&self) -> usize {
        self.blocks.len() - self.cfg.reservoir_blocks
    }

    fn incremental_block(&self, stage: usize) -> usize {
        self.cfg.reservoir_blocks + stage - 1
    }

    fn eval_blocks(&self, stage: usize) -> std::ops::Range<usize> {
        let b = self.incremental_block(stage);
        let end = match self.cfg.eval {
            EvalMode::All => self.blocks.len(),
            EvalMode::Next => (b + 2).min(self.blocks.len()),
        };
        b + 1..end
    }

    fn fit(
        &self,
        warm: Option<ParamSet>,
        data: &[InteractionRecord],
        stage: usize,
    ) -> Result<TrainRun> {
        let init =
            warm.unwrap_or_else(|| self.model.init_params(stream_seed(self.seed, stage, INIT)));
        let mut tc = self.cfg.train.clone();
        tc.seed = stream_seed(self.seed, stage, SHUFFLE);
        train(&self.model, init, data, &tc)
    }

    fn current(&self) -> &TrainRun {
        self.current
            .as_ref()
            .expect("replay strategies train at stage 0")
    }

    /// How many reservoir records survive stage `stage`.
    fn keep_count(&self, stage: usize) -> Result<usize> {
        let capacity = self.reservoir.capacity();
        let incoming = self.blocks.block(self.incremental_block(stage)).len();
        let plan = SelectionPlan::for_stage(capacity, incoming, self.cfg.replay_ratio)?;
        // A large ratio cannot push the merged reservoir past capacity.
        let room = capacity
            .checked_sub(incoming)
            .ok_or(Error::CapacityExceeded {
                capacity,
                size: incoming,
            })?;
        Ok(plan.k.min(room).min(self.reservoir.len()))
    }

    fn megg_scores(&self, stage: usize) -> Result<Vec<ScoreEntry>> {
        let d = self.reservoir.records();
        let incoming = self.blocks.block(self.incremental_block(stage));
        let snaps = TrainingSnapshots::from_run(self.current())?;
        let sel = self.cfg.selection;
        let resolved =
            scheme_resolve(&self.model, self.cfg.scheme, &snaps, d, Some(incoming), sel)?;
        ggscore_batch(
            &self.model,
            resolved.theta_prime,
            d,
            &resolved.reference,
            sel,
        )
    }

    fn select(&self, stage: usize) -> Result<Vec<usize>> {
        let k = self.keep_count(stage)?;
        let d = self.reservoir.records();
        let incoming = self.blocks.block(self.incremental_block(stage));
        match self.cfg.strategy {
            Strategy::Megg => select_extreme(&self.megg_scores(stage)?, k),
            Strategy::GDumb => {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, stage, SAMPLE));
                gdumb_select(d.len(), k, &mut rng)
            }
            Strategy::ICaRL => icarl_select(&self.model, &self.current().params, d, k),
            Strategy::Mir => mir_select(
                &self.model,
                &self.current().params,
                d,
                incoming,
                k,
                self.cfg.train.lr,
            ),
            Strategy::FineTune | Strategy::FullBatch => unreachable!("not a replay strategy"),
        }
    }

    fn stage(&mut self, stage: usize) -> Result<StageReport> {
        let b = self.incremental_block(stage);
        let incoming = self.blocks.block(b);
        if incoming.is_empty() {
            return Err(Error::EmptyIncrement);
        }
        let evals = self.eval_blocks(stage);
        let evaluate = !evals.is_empty();
        let mut timing = StageTiming::default();
        let mut train_size = 0;
        let mut reservoir_size = None;

        match self.cfg.strategy {
            Strategy::FineTune => {
                if evaluate {
                    let t = Instant::now();
                    let warm = self.current().params.clone();
                    self.current = Some(self.fit(Some(warm), incoming, stage)?);
                    timing.train_secs = t.elapsed().as_secs_f64();
                    train_size = incoming.len();
                    self.max_train_ts = self.max_train_ts.max(max_ts(incoming));
                }
            }
            Strategy::FullBatch => {
                if evaluate {
                    let data = self.blocks.concat(0..b + 1);
                    let t = Instant::now();
                    self.current = Some(self.fit(None, &data, stage)?);
                    timing.train_secs = t.elapsed().as_secs_f64();
                    train_size = data.len();
                    self.max_train_ts = max_ts(&data);
                }
            }
            _ => {
                let t = Instant::now();
                let kept = self.select(stage)?;
                timing.select_secs = t.elapsed().as_secs_f64();
                let kept = take_indices(self.reservoir.records(), &kept);
                self.reservoir.update(kept, incoming)?;
                reservoir_size = Some(self.reservoir.len());
                debug!(
                    "stage {stage}: reservoir holds {} records",
                    self.reservoir.len()
                );
                if evaluate {
                    let data = self.reservoir.records().to_vec();
                    let t = Instant::now();
                    self.current = Some(self.fit(None, &data, stage)?);
                    timing.train_secs = t.elapsed().as_secs_f64();
                    train_size = data.len();
                    self.max_train_ts = max_ts(&data);
                }
            }
        }

        let evals = if evaluate {
            let params = &self.current().params;
            evals
                .map(|k| evaluate_block(&self.model, params, self.blocks.block(k), k))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(StageReport {
            stage,
            block: b,
            train_size,
            reservoir_size,
            max_train_timestamp: self.max_train_ts,
            evals,
            timing,
        })
    }
}

/// RMSE and AUC of `params` on one block. Rating heads score RMSE against the
/// rating and AUC of the predicted rating against the binary label; logistic
/// heads use the predicted probability for both.
pub fn evaluate_block(
    model: &Recommender,
    params: &ParamSet,
    block: &[InteractionRecord],
    index: usize,
) -> Result<BlockEval> {
    if block.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predict_all(model, params, block)?;
    let (rmse_value, scores) = match model.head() {
        LossKind::SquaredError => {
            let ratings: Vec<f64> = block.iter().map(|r| r.rating).collect();
            (rmse(&preds, &ratings)?, preds)
        }
        LossKind::Logistic => {
            let probs: Vec<f64> = preds.iter().map(|&p| sigmoid(p)).collect();
            let labels = block
                .iter()
                .map(|r| r.label.map(f64::from).ok_or(Error::MissingLabel))
                .collect::<Result<Vec<_>>>()?;
            (rmse(&probs, &labels)?, probs)
        }
    };
    let (s, l): (Vec<f64>, Vec<u8>) = scores
        .iter()
        .zip(block)
        .filter_map(|(&s, r)| Some((s, r.label?)))
        .unzip();
    let auc_value = match auc(&s, &l) {
        Ok(a) => Some(a),
        Err(Error::UndefinedAuc) => None,
        Err(e) => return Err(e),
    };
    Ok(BlockEval {
        block: index,
        rmse: rmse_value,
        auc: auc_value,
        min_timestamp: block.iter().map(|r| r.timestamp).min().unwrap_or(i64::MAX),
    })
}
