use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LossKind, Sample};

/// One user-item event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user: usize,
    pub item: usize,
    /// Explicit rating (or a frequency-derived rating).
    pub rating: f64,
    /// Binary label derived from the rating, when the labeling rule assigns one.
    pub label: Option<u8>,
    pub timestamp: i64,
}

impl InteractionRecord {
    pub fn new(user: usize, item: usize, rating: f64, timestamp: i64) -> Self {
        Self {
            user,
            item,
            rating,
            label: None,
            timestamp,
        }
    }

    pub fn with_label(mut self, label: Option<u8>) -> Self {
        self.label = label;
        self
    }
}

impl Sample for InteractionRecord {
    fn target(&self, kind: LossKind) -> Result<f64> {
        match kind {
            LossKind::SquaredError => Ok(self.rating),
            LossKind::Logistic => self.label.map(f64::from).ok_or(Error::MissingLabel),
        }
    }
}

/// First-seen dense remapping of raw user and item ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn user(&mut self, raw: &str) -> usize {
        intern(&mut self.users, &mut self.user_index, raw)
    }

    pub fn item(&mut self, raw: &str) -> usize {
        intern(&mut self.items, &mut self.item_index, raw)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn raw_user(&self, dense: usize) -> Option<&str> {
        self.users.get(dense).map(String::as_str)
    }

    pub fn raw_item(&self, dense: usize) -> Option<&str> {
        self.items.get(dense).map(String::as_str)
    }

    pub fn dense_user(&self, raw: &str) -> Option<usize> {
        self.user_index.get(raw).copied()
    }

    pub fn dense_item(&self, raw: &str) -> Option<usize> {
        self.item_index.get(raw).copied()
    }

    /// Writes `raw_id,dense_id,kind` rows, users first.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["raw_id", "dense_id", "kind"])?;
        for (kind, ids) in [("user", &self.users), ("item", &self.items)] {
            for (dense, raw) in ids.iter().enumerate() {
                w.write_record([raw.as_str(), &dense.to_string(), kind])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn intern(ids: &mut Vec<String>, index: &mut HashMap<String, usize>, raw: &str) -> usize {
    if let Some(&d) = index.get(raw) {
        return d;
    }
    let d = ids.len();
    ids.push(raw.to_owned());
    index.insert(raw.to_owned(), d);
    d
}

/// Number of distinct dense users and items referenced (max id + 1).
pub fn id_extent(records: &[InteractionRecord]) -> (usize, usize) {
    records
        .iter()
        .fold((0, 0), |(u, i), r| (u.max(r.user + 1), i.max(r.item + 1)))
}
