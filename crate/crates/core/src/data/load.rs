//! Loaders for rating logs and prepared block directories.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::label::{binarize, LabelRule};
use super::record::{IdMap, InteractionRecord};
use super::split::BlockSet;
use crate::error::{Error, Result};

/// Share of malformed lines above which a load is aborted.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

pub const CSV_HEADER: [&str; 4] = ["user", "item", "rating", "timestamp"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MalformedLine {
    /// 1-based line number in the source file.
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadedData {
    pub records: Vec<InteractionRecord>,
    pub ids: IdMap,
    pub malformed: Vec<MalformedLine>,
}

struct Raw<'a> {
    user: &'a str,
    item: &'a str,
    rating: f64,
    timestamp: i64,
}

fn parse_fields<'a>(fields: &[&'a str]) -> std::result::Result<Raw<'a>, String> {
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let (user, item) = (fields[0].trim(), fields[1].trim());
    if user.is_empty() || item.is_empty() {
        return Err("empty id".into());
    }
    let rating: f64 = fields[2]
        .trim()
        .parse()
        .map_err(|_| format!("bad rating {:?}", fields[2]))?;
    if !rating.is_finite() {
        return Err(format!("non-finite rating {:?}", fields[2]));
    }
    let timestamp: i64 = fields[3]
        .trim()
        .parse()
        .map_err(|_| format!("bad timestamp {:?}", fields[3]))?;
    Ok(Raw {
        user,
        item,
        rating,
        timestamp,
    })
}

struct Collector {
    path: PathBuf,
    rule: LabelRule,
    data: LoadedData,
    total: usize,
}

impl Collector {
    fn new(path: &Path, rule: LabelRule) -> Self {
        Self {
            path: path.to_owned(),
            rule,
            data: LoadedData::default(),
            total: 0,
        }
    }

    fn push(&mut self, line: usize, parsed: std::result::Result<Raw<'_>, String>) {
        self.total += 1;
        match parsed {
            Ok(raw) => {
                let user = self.data.ids.user(raw.user);
                let item = self.data.ids.item(raw.item);
                let label = binarize(raw.rating, self.rule).ok().flatten();
                self.data.records.push(
                    InteractionRecord::new(user, item, raw.rating, raw.timestamp).with_label(label),
                );
            }
            Err(reason) => self.data.malformed.push(MalformedLine { line, reason }),
        }
    }

    fn finish(self) -> Result<LoadedData> {
        let bad = self.data.malformed.len();
        if self.total == 0 {
            warn!("{}: no records", self.path.display());
        } else if bad as f64 > MAX_MALFORMED_FRACTION * self.total as f64 {
            let first = &self.data.malformed[0];
            return Err(Error::TooManyMalformed {
                path: self.path,
                malformed: bad,
                total: self.total,
                first_line: first.line,
                reason: first.reason.clone(),
            });
        }
        for m in &self.data.malformed {
            warn!("{}:{}: skipped: {}", self.path.display(), m.line, m.reason);
        }
        Ok(self.data)
    }
}

/// Reads `UserID::MovieID::Rating::Timestamp` lines, remapping ids densely in
/// first-seen order. Ids must be integers in this format.
pub fn load_movielens(path: &Path, rule: LabelRule) -> Result<LoadedData> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut c = Collector::new(path, rule);
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        let parsed = parse_fields(&fields).and_then(|raw| {
            for id in [raw.user, raw.item] {
                id.parse::<u64>()
                    .map_err(|_| format!("non-numeric id {id:?}"))?;
            }
            Ok(raw)
        });
        c.push(n + 1, parsed);
    }
    c.finish()
}

/// Reads a CSV with header `user,item,rating,timestamp`. Ids are arbitrary
/// strings and are remapped densely in first-seen order.
pub fn load_csv(path: &Path, rule: LabelRule) -> Result<LoadedData> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr.headers()?.clone();
    let mut c = Collector::new(path, rule);
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        warn!("{}: empty file", path.display());
        return Ok(c.data);
    }
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::HeaderMismatch {
            expected: CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let fields: Vec<&str> = row.iter().collect();
        c.push(line, parse_fields(&fields));
    }
    c.finish()
}

fn block_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("block_{k:02}.csv"))
}

/// Writes `block_NN.csv` files (`user,item,rating,label,timestamp`, dense ids).
pub fn write_blocks(dir: &Path, blocks: &BlockSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, block) in blocks.blocks().iter().enumerate() {
        let path = block_path(dir, k);
        let mut w = csv::Writer::from_path(&path)?;
        for r in block {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads the blocks written by [`write_blocks`], in order.
pub fn read_blocks(dir: &Path) -> Result<BlockSet> {
    let mut blocks = Vec::new();
    loop {
        let path = block_path(dir, blocks.len());
        if !path.exists() {
            break;
        }
        let mut rdr = csv::Reader::from_path(&path)?;
        let block: Vec<InteractionRecord> =
            rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        blocks.push(block);
    }
    if blocks.len() < 2 {
        return Err(Error::TooFewRecords {
            needed: 2,
            got: blocks.len(),
        });
    }
    Ok(BlockSet::from_blocks(blocks))
}
