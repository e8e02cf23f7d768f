//! Protocol configuration and its `key = value` text form.
//!
//! One setting per line; `#` starts a comment and blank lines are ignored.
//! Unknown keys are rejected. Every key is optional:
//!
//! ```text
//! dataset = synthetic          # synthetic | movielens | csv | prepared
//! data_path = ratings.dat      # file (movielens, csv) or block dir (prepared)
//! label_rule = movielens       # movielens | taobao
//! n_blocks = 15
//! reservoir_blocks = 10
//! synth_users = 300
//! synth_items = 500
//! synth_records = 30000
//! synth_latent_dim = 8
//! synth_phases = 15
//! synth_drift = 0.5
//! synth_interaction_scale = 2.0
//! synth_noise = 0.3
//! synth_seed = 0
//! model = wdl                  # wdl | dcn | nfm
//! embedding_dim = 64
//! hidden = 64,32
//! cross_depth = 2
//! task = rating                # rating | binary
//! epochs = 5
//! batch_size = 1024
//! lr = 0.001
//! optimizer = adam             # adam | mbgd
//! strategy = megg              # megg | gdumb | icarl | mir | finetune | fullbatch
//! scheme = A                   # A | B | C | D
//! replay_ratio = none          # none or a fraction of the reservoir in [0, 1]
//! selection = selected         # selected | full
//! eval = all                   # all | next
//! seeds = 0,1,2,3,4
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{DriftConfig, LabelRule};
use crate::error::{Error, Result};
use crate::model::{ArchDescriptor, Backbone};
use crate::nn::{LossKind, Optimizer, ParamSelection, TrainConfig};
use crate::replay::Strategy;

use super::Scheme;

/// Where the interaction log comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Generated by [`crate::data::synth_drift`].
    Synthetic,
    /// `user::item::rating::timestamp` lines.
    MovieLens(PathBuf),
    /// `user,item,rating,timestamp` with a header.
    Csv(PathBuf),
    /// A directory of block files written by [`crate::data::write_blocks`].
    Prepared(PathBuf),
}

/// Which later blocks a stage is evaluated on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EvalMode {
    /// Every block after the stage's incremental block.
    #[default]
    All,
    /// Only the block right after it.
    Next,
}

/// Backbone hyper-parameters; user and item counts come from the data.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub backbone: Backbone,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
    pub cross_depth: usize,
    pub head: LossKind,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            backbone: Backbone::WideDeep,
            embedding_dim: 64,
            hidden: vec![64, 32],
            cross_depth: 2,
            head: LossKind::SquaredError,
        }
    }
}

impl ModelSpec {
    pub fn arch(&self, num_users: usize, num_items: usize) -> ArchDescriptor {
        ArchDescriptor {
            backbone: self.backbone,
            embedding_dim: self.embedding_dim,
            hidden: self.hidden.clone(),
            num_users,
            num_items,
            head: self.head,
            cross_depth: self.cross_depth,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub source: DataSource,
    pub label_rule: LabelRule,
    pub synth: DriftConfig,
    pub synth_seed: u64,
    pub n_blocks: usize,
    pub reservoir_blocks: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub strategy: Strategy,
    pub scheme: Scheme,
    /// Keep `round(ratio * M)` records instead of `M - M'`.
    pub replay_ratio: Option<f64>,
    pub selection: ParamSelection,
    pub eval: EvalMode,
    pub seeds: Vec<u64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            label_rule: LabelRule::MovieLens,
            synth: DriftConfig::default(),
            synth_seed: 0,
            n_blocks: 15,
            reservoir_blocks: 10,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            strategy: Strategy::Megg,
            scheme: Scheme::A,
            replay_ratio: None,
            selection: ParamSelection::Selected,
            eval: EvalMode::All,
            seeds: vec![0],
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| number(key, s))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ProtocolConfig {
    /// Reads a config file. A relative `data_path` is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.source {
            DataSource::Synthetic => {}
            DataSource::MovieLens(p) | DataSource::Csv(p) | DataSource::Prepared(p) => rebase(p),
        }
        Ok(cfg)
    }

    /// Parses the text form, starting from the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut dataset = String::from("synthetic");
        let mut data_path: Option<PathBuf> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value, &mut dataset, &mut data_path)
                .map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
        }
        cfg.source = match (dataset.as_str(), data_path) {
            ("synthetic" | "synth", _) => DataSource::Synthetic,
            ("movielens" | "ml", Some(p)) => DataSource::MovieLens(p),
            ("csv", Some(p)) => DataSource::Csv(p),
            ("prepared", Some(p)) => DataSource::Prepared(p),
            ("movielens" | "ml" | "csv" | "prepared", None) => {
                return Err(invalid(format!("dataset {dataset} needs data_path")))
            }
            (other, _) => return Err(invalid(format!("unknown dataset {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(
        &mut self,
        key: &str,
        value: &str,
        dataset: &mut String,
        data_path: &mut Option<PathBuf>,
    ) -> Result<()> {
        match key {
            "dataset" => *dataset = value.to_ascii_lowercase(),
            "data_path" => *data_path = Some(PathBuf::from(value)),
            "label_rule" => self.label_rule = value.parse()?,
            "n_blocks" => self.n_blocks = number(key, value)?,
            "reservoir_blocks" => self.reservoir_blocks = number(key, value)?,
            "synth_users" => self.synth.num_users = number(key, value)?,
            "synth_items" => self.synth.num_items = number(key, value)?,
            "synth_records" => self.synth.num_records = number(key, value)?,
            "synth_latent_dim" => self.synth.latent_dim = number(key, value)?,
            "synth_phases" => self.synth.phases = number(key, value)?,
            "synth_drift" => self.synth.drift = number(key, value)?,
            "synth_interaction_scale" => self.synth.interaction_scale = number(key, value)?,
            "synth_noise" => self.synth.noise = number(key, value)?,
            "synth_seed" => self.synth_seed = number(key, value)?,
            "model" => self.model.backbone = value.parse()?,
            "embedding_dim" => self.model.embedding_dim = number(key, value)?,
            "hidden" => self.model.hidden = list(key, value)?,
            "cross_depth" => self.model.cross_depth = number(key, value)?,
            "task" => {
                self.model.head = match value.to_ascii_lowercase().as_str() {
                    "rating" => LossKind::SquaredError,
                    "binary" | "ctr" => LossKind::Logistic,
                    other => return Err(invalid(format!("unknown task {other:?}"))),
                }
            }
            "epochs" => self.train.epochs = number(key, value)?,
            "batch_size" => self.train.batch_size = number(key, value)?,
            "lr" => self.train.lr = number(key, value)?,
            "optimizer" => {
                self.train.optimizer = match value.to_ascii_lowercase().as_str() {
                    "adam" => Optimizer::Adam,
                    "mbgd" | "sgd" => Optimizer::Mbgd,
                    other => return Err(invalid(format!("unknown optimizer {other:?}"))),
                }
            }
            "strategy" => self.strategy = value.parse()?,
            "scheme" => self.scheme = value.parse()?,
            "replay_ratio" => {
                self.replay_ratio = match value.to_ascii_lowercase().as_str() {
                    "" | "none" => None,
                    v => Some(number(key, v)?),
                }
            }
            "selection" => {
                self.selection = match value.to_ascii_lowercase().as_str() {
                    "selected" => ParamSelection::Selected,
                    "full" => ParamSelection::Full,
                    other => return Err(invalid(format!("unknown selection {other:?}"))),
                }
            }
            "eval" => {
                self.eval = match value.to_ascii_lowercase().as_str() {
                    "all" => EvalMode::All,
                    "next" => EvalMode::Next,
                    other => return Err(invalid(format!("unknown eval mode {other:?}"))),
                }
            }
            "seeds" => self.seeds = list(key, value)?,
            other => return Err(invalid(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 2 {
            return Err(invalid(format!(
                "n_blocks must be >= 2, got {}",
                self.n_blocks
            )));
        }
        if self.reservoir_blocks == 0 || self.reservoir_blocks >= self.n_blocks {
            return Err(invalid(format!(
                "reservoir_blocks must lie in 1..{}, got {}",
                self.n_blocks, self.reservoir_blocks
            )));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds must not be empty"));
        }
        if let Some(r) = self.replay_ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(invalid(format!("replay_ratio must lie in [0, 1], got {r}")));
            }
        }
        if self.strategy == crate::replay::Strategy::Megg {
            let needed = match self.scheme {
                Scheme::A | Scheme::D => 2,
                Scheme::B | Scheme::C => 3,
            };
            if self.train.epochs < needed {
                return Err(invalid(format!(
                    "scheme {} needs at least {needed} epochs, got {}",
                    self.scheme, self.train.epochs
                )));
            }
        }
        if self.source == DataSource::Synthetic {
            self.synth.validate()?;
        }
        self.train.validate()?;
        self.model.arch(1, 1).validate()
    }

    /// The text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let (dataset, path) = match &self.source {
            DataSource::Synthetic => ("synthetic", None),
            DataSource::MovieLens(p) => ("movielens", Some(p)),
            DataSource::Csv(p) => ("csv", Some(p)),
            DataSource::Prepared(p) => ("prepared", Some(p)),
        };
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("dataset", dataset.into());
        if let Some(p) = path {
            line("data_path", p.display().to_string());
        }
        line("label_rule", self.label_rule.to_string());
        line("n_blocks", self.n_blocks.to_string());
        line("reservoir_blocks", self.reservoir_blocks.to_string());
        line("synth_users", self.synth.num_users.to_string());
        line("synth_items", self.synth.num_items.to_string());
        line("synth_records", self.synth.num_records.to_string());
        line("synth_latent_dim", self.synth.latent_dim.to_string());
        line("synth_phases", self.synth.phases.to_string());
        line("synth_drift", self.synth.drift.to_string());
        line(
            "synth_interaction_scale",
            self.synth.interaction_scale.to_string(),
        );
        line("synth_noise", self.synth.noise.to_string());
        line("synth_seed", self.synth_seed.to_string());
        line("model", self.model.backbone.to_string());
        line("embedding_dim", self.model.embedding_dim.to_string());
        line("hidden", join(&self.model.hidden));
        line("cross_depth", self.model.cross_depth.to_string());
        line(
            "task",
            match self.model.head {
                LossKind::SquaredError => "rating",
                LossKind::Logistic => "binary",
            }
            .into(),
        );
        line("epochs", self.train.epochs.to_string());
        line("batch_size", self.train.batch_size.to_string());
        line("lr", self.train.lr.to_string());
        line(
            "optimizer",
            match self.train.optimizer {
                Optimizer::Adam => "adam",
                Optimizer::Mbgd => "mbgd",
            }
            .into(),
        );
        line("strategy", self.strategy.to_string());
        line("scheme", self.scheme.to_string());
        line(
            "replay_ratio",
            self.replay_ratio.map_or("none".into(), |r| r.to_string()),
        );
        line(
            "selection",
            match self.selection {
                ParamSelection::Selected => "selected",
                ParamSelection::Full => "full",
            }
            .into(),
        );
        line(
            "eval",
            match self.eval {
                EvalMode::All => "all",
                EvalMode::Next => "next",
            }
            .into(),
        );
        line("seeds", join(&self.seeds));
        s
    }
}
