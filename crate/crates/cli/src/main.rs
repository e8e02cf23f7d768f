//! `drift-replay` command-line harness.

mod validate;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use drift_replay::data::{load_csv, load_movielens, split_blocks, write_blocks, LabelRule};
use drift_replay::protocol::{
    aggregate_dir, emit_report, prepare_data, run_prepared, stage_scores, ReportPaths,
};
use drift_replay::ProtocolConfig;

/// Environment variable that caps the worker threads used for scoring.
const THREADS_ENV: &str = "DRIFT_REPLAY_THREADS";

#[derive(Parser)]
#[command(
    name = "drift-replay",
    version,
    about = "Influence-guided experience replay for incremental recommenders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a raw interaction log and write it as time-ordered blocks.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Movielens)]
        format: Format,
        #[arg(long, default_value_t = 15)]
        blocks: usize,
        #[arg(long, default_value = "movielens")]
        label_rule: LabelRule,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the staged incremental protocol and write the metric reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the reservoir scores a replay strategy sees at one stage.
    Score {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        stage: usize,
        /// Defaults to the first seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Numerical checks of the influence estimator.
    Validate {
        #[arg(long, value_enum)]
        suite: validate::Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for suites that write files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate stage reports found in a directory and its subdirectories.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// `user::item::rating::timestamp`
    Movielens,
    /// Header row `user,item,rating,timestamp`
    Csv,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    init_threads()?;
    match Cli::parse().command {
        Command::Prepare {
            input,
            format,
            blocks,
            label_rule,
            out,
        } => prepare(&input, format, blocks, label_rule, &out),
        Command::Run { config, out } => run(&config, &out),
        Command::Score {
            config,
            stage,
            seed,
            out,
        } => score(&config, stage, seed, &out),
        Command::Validate { suite, seed, out } => validate::run(suite, seed, out.as_deref()),
        Command::Report { input } => {
            let summary = aggregate_dir(&input)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .with_context(|| format!("{THREADS_ENV}={raw:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn prepare(input: &Path, format: Format, n: usize, rule: LabelRule, out: &Path) -> Result<()> {
    let loaded = match format {
        Format::Movielens => load_movielens(input, rule),
        Format::Csv => load_csv(input, rule),
    }
    .with_context(|| format!("loading {}", input.display()))?;
    for bad in &loaded.malformed {
        log::warn!("skipped line {}: {}", bad.line, bad.reason);
    }
    let total = loaded.records.len();
    let blocks = split_blocks(loaded.records, n)?;
    write_blocks(out, &blocks)?;
    loaded.ids.write_csv(&out.join("ids.csv"))?;
    log::info!(
        "{total} records, {} users, {} items -> {n} blocks in {}",
        loaded.ids.num_users(),
        loaded.ids.num_items(),
        out.display()
    );
    Ok(())
}

fn run(config: &Path, out: &Path) -> Result<()> {
    let cfg = ProtocolConfig::load(config)?;
    let data = prepare_data(&cfg)?;
    log::info!(
        "{} on {} blocks, {} users, {} items, seeds {:?}",
        cfg.strategy,
        data.blocks.len(),
        data.num_users,
        data.num_items,
        cfg.seeds
    );
    let report = run_prepared(&cfg, &data)?;
    emit_report(&report, &ReportPaths::in_dir(out))?;
    fs::write(out.join("config.txt"), cfg.to_text())?;
    println!("{}", serde_json::to_string_pretty(&report.summary())?);
    Ok(())
}

fn score(config: &Path, stage: usize, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = ProtocolConfig::load(config)?;
    let seed = match seed {
        Some(s) => s,
        None => match cfg.seeds.first() {
            Some(&s) => s,
            None => bail!("config lists no seeds"),
        },
    };
    let data = prepare_data(&cfg)?;
    let scores = stage_scores(&cfg, &data, seed, stage)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(out)?;
    for s in &scores {
        w.serialize(s)?;
    }
    w.flush()?;
    log::info!(
        "{} records scored, {} kept -> {}",
        scores.len(),
        scores.iter().filter(|s| s.kept).count(),
        out.display()
    );
    Ok(())
}
