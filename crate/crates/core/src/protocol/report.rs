//! Stage, seed, and run reports plus their CSV and JSON files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{finite_mean, mean_std};

/// Header of `stages.csv`.
pub const STAGE_CSV_HEADER: [&str; 5] = ["seed", "stage", "block", "metric", "value"];
pub const STAGES_FILE: &str = "stages.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMINGS_FILE: &str = "timings.csv";

/// Metrics of one stage's model on one later block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEval {
    pub block: usize,
    pub rmse: f64,
    /// `None` when the block holds a single class.
    pub auc: Option<f64>,
    pub min_timestamp: i64,
}

/// Wall-clock seconds; kept apart from the metrics so reports compare
/// bit-for-bit across runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub train_secs: f64,
    pub select_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// 1-based stage index.
    pub stage: usize,
    /// Index of the stage's incremental block.
    pub block: usize,
    /// Records the evaluated model was last trained on (0 when the stage has
    /// nothing to evaluate and skips training).
    pub train_size: usize,
    /// Reservoir size after the update; `None` for strategies without one.
    pub reservoir_size: Option<usize>,
    /// Latest timestamp the evaluated model has ever been trained on.
    pub max_train_timestamp: i64,
    pub evals: Vec<BlockEval>,
    pub timing: StageTiming,
}

impl StageReport {
    pub fn rmse(&self) -> f64 {
        finite_mean(self.evals.iter().map(|e| e.rmse))
    }

    pub fn auc(&self) -> f64 {
        finite_mean(self.evals.iter().filter_map(|e| e.auc))
    }

    pub fn has_metrics(&self) -> bool {
        !self.evals.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub stages: Vec<StageReport>,
}

impl SeedReport {
    /// One `stages.csv` row per evaluated block and metric.
    pub fn rows(&self) -> Vec<StageRow> {
        let mut rows = Vec::new();
        for st in &self.stages {
            for e in &st.evals {
                let row = |metric: &str, value: f64| StageRow {
                    seed: self.seed,
                    stage: st.stage,
                    block: e.block,
                    metric: metric.into(),
                    value,
                };
                rows.push(row("rmse", e.rmse));
                if let Some(a) = e.auc {
                    rows.push(row("auc", a));
                }
            }
        }
        rows
    }

    /// Mean stage RMSE over the stages that have later blocks to evaluate.
    pub fn avg_rmse(&self) -> f64 {
        finite_mean(
            self.stages
                .iter()
                .filter(|s| s.has_metrics())
                .map(StageReport::rmse),
        )
    }

    pub fn avg_auc(&self) -> f64 {
        finite_mean(
            self.stages
                .iter()
                .filter(|s| s.has_metrics())
                .map(StageReport::auc),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: String,
    pub scheme: String,
    pub seeds: Vec<SeedReport>,
}

impl RunReport {
    pub fn rows(&self) -> Vec<StageRow> {
        self.seeds.iter().flat_map(SeedReport::rows).collect()
    }

    pub fn summary(&self) -> Summary {
        Summary::from_rows(&self.rows())
    }
}

/// One line of `stages.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub seed: u64,
    pub stage: usize,
    pub block: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub avg_rmse: f64,
    pub avg_auc: f64,
    pub stages: Vec<usize>,
}

/// Per-seed averages and their mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: Vec<SeedSummary>,
    pub avg_rmse_mean: f64,
    pub avg_rmse_std: f64,
    pub avg_auc_mean: f64,
    pub avg_auc_std: f64,
}

impl Summary {
    /// Stage metric = mean over its blocks; seed average = mean over its
    /// stages; then mean and spread across seeds.
    pub fn from_rows(rows: &[StageRow]) -> Self {
        // seed -> stage -> metric -> block values
        let mut tree: BTreeMap<u64, BTreeMap<usize, BTreeMap<&str, Vec<f64>>>> = BTreeMap::new();
        for r in rows {
            tree.entry(r.seed)
                .or_default()
                .entry(r.stage)
                .or_default()
                .entry(r.metric.as_str())
                .or_default()
                .push(r.value);
        }
        let seeds: Vec<SeedSummary> = tree
            .iter()
            .map(|(&seed, stages)| {
                let avg = |metric: &str| {
                    finite_mean(
                        stages
                            .values()
                            .filter_map(|m| m.get(metric))
                            .map(|v| finite_mean(v.iter().copied())),
                    )
                };
                SeedSummary {
                    seed,
                    avg_rmse: avg("rmse"),
                    avg_auc: avg("auc"),
                    stages: stages.keys().copied().collect(),
                }
            })
            .collect();
        let spread = |f: fn(&SeedSummary) -> f64| {
            let v: Vec<f64> = seeds.iter().map(f).filter(|x| x.is_finite()).collect();
            mean_std(&v)
        };
        let (avg_rmse_mean, avg_rmse_std) = spread(|s| s.avg_rmse);
        let (avg_auc_mean, avg_auc_std) = spread(|s| s.avg_auc);
        Self {
            seeds,
            avg_rmse_mean,
            avg_rmse_std,
            avg_auc_mean,
            avg_auc_std,
        }
    }
}

/// Files written by [`emit_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReportPaths {
    pub stages: PathBuf,
    pub summary: PathBuf,
    pub timings: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            stages: dir.join(STAGES_FILE),
            summary: dir.join(SUMMARY_FILE),
            timings: dir.join(TIMINGS_FILE),
        }
    }
}

pub fn write_stage_rows(path: &Path, rows: &[StageRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    // serde only emits a header with the first record, so write it by hand.
    w.write_record(STAGE_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.stage.to_string(),
            r.block.to_string(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_stage_rows(path: &Path) -> Result<Vec<StageRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != STAGE_CSV_HEADER {
        return Err(Error::HeaderMismatch {
            expected: STAGE_CSV_HEADER.join(","),
            found: header.join(","),
        });
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Writes `stages.csv`, `timings.csv` and `summary.json`, replacing any
/// previous versions.
pub fn emit_report(report: &RunReport, paths: &ReportPaths) -> Result<()> {
    for p in [&paths.stages, &paths.summary, &paths.timings] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    write_stage_rows(&paths.stages, &report.rows())?;

    let mut w = csv::Writer::from_path(&paths.timings)?;
    w.write_record([
        "seed",
        "stage",
        "train_size",
        "reservoir_size",
        "train_secs",
        "select_secs",
    ])?;
    for s in &report.seeds {
        for st in &s.stages {
            w.write_record([
                s.seed.to_string(),
                st.stage.to_string(),
                st.train_size.to_string(),
                st.reservoir_size.map_or(String::new(), |r| r.to_string()),
                format!("{:.6}", st.timing.train_secs),
                format!("{:.6}", st.timing.select_secs),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&paths.timings, e))?;

    let summary = serde_json::json!({
        "strategy": report.strategy,
        "scheme": report.scheme,
        "summary": report.summary(),
    });
    write_json(&paths.summary, &flatten(summary))
}

/// Lifts the `summary` object's fields to the top level.
fn flatten(mut v: serde_json::Value) -> serde_json::Value {
    if let Some(obj) = v.as_object_mut() {
        if let Some(serde_json::Value::Object(inner)) = obj.remove("summary") {
            obj.extend(inner);
        }
    }
    v
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Pools every `stages.csv` in `dir` and its immediate subdirectories.
pub fn aggregate_dir(dir: &Path) -> Result<Summary> {
    let mut files = Vec::new();
    let top = dir.join(STAGES_FILE);
    if top.is_file() {
        files.push(top);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    files.extend(
        subdirs
            .into_iter()
            .map(|d| d.join(STAGES_FILE))
            .filter(|p| p.is_file()),
    );
    if files.is_empty() {
        return Err(Error::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no stages.csv found"),
        });
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(read_stage_rows(f)?);
    }
    Ok(Summary::from_rows(&rows))
}
