use serde::{Deserialize, Serialize};

use crate::data::InteractionRecord;
use crate::error::{Error, Result};

/// Bounded, chronologically ordered store of past interactions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    records: Vec<InteractionRecord>,
    capacity: usize,
}

impl Reservoir {
    /// A reservoir holding `records` (re-sorted by timestamp, stably).
    pub fn new(mut records: Vec<InteractionRecord>, capacity: usize) -> Result<Self> {
        if records.len() > capacity {
            return Err(Error::CapacityExceeded {
                capacity,
                size: records.len(),
            });
        }
        records.sort_by_key(|r| r.timestamp);
        Ok(Self { records, capacity })
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Replaces the contents with `kept` plus `incoming`.
    pub fn update(
        &mut self,
        kept: Vec<InteractionRecord>,
        incoming: &[InteractionRecord],
    ) -> Result<()> {
        *self = reservoir_update(kept, incoming, self.capacity)?;
        Ok(())
    }
}

/// Records at `indices` (ascending) in their original order.
pub fn take_indices(data: &[InteractionRecord], indices: &[usize]) -> Vec<InteractionRecord> {
    indices.iter().map(|&i| data[i].clone()).collect()
}

/// `kept` followed by `incoming`, stably sorted by timestamp, so records with
/// equal timestamps keep their source order with `kept` first.
pub fn reservoir_update(
    kept: Vec<InteractionRecord>,
    incoming: &[InteractionRecord],
    capacity: usize,
) -> Result<Reservoir> {
    let size = kept.len() + incoming.len();
    if size > capacity {
        return Err(Error::CapacityExceeded { capacity, size });
    }
    let mut records = kept;
    records.extend_from_slice(incoming);
    Reservoir::new(records, capacity)
}
