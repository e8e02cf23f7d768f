//! The staged incremental-training protocol: configuration, scheme choice,
//! the stage loop, and its reports.

mod config;
mod report;
mod run;
mod scheme;

pub use config::{DataSource, EvalMode, ModelSpec, ProtocolConfig};
pub use report::{
    aggregate_dir, emit_report, read_stage_rows, write_json, write_stage_rows, BlockEval,
    ReportPaths, RunReport, SeedReport, SeedSummary, StageReport, StageRow, StageTiming, Summary,
    STAGES_FILE, STAGE_CSV_HEADER, SUMMARY_FILE, TIMINGS_FILE,
};
pub use run::{
    evaluate_block, prepare_data, run_prepared, run_protocol, run_seed, stage_scores, PreparedData,
    ScoredRecord,
};
pub use scheme::{scheme_resolve, ResolvedScheme, Scheme};
