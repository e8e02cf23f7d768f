use serde::{Deserialize, Serialize};

use super::InteractionRecord;
use crate::error::{Error, Result};

/// A corpus cut into chronological blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSet {
    blocks: Vec<Vec<InteractionRecord>>,
}

impl BlockSet {
    /// Wraps pre-split blocks as-is.
    pub fn from_blocks(blocks: Vec<Vec<InteractionRecord>>) -> Self {
        Self { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<InteractionRecord>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &[InteractionRecord] {
        &self.blocks[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// First and last timestamp of each non-empty block.
    pub fn boundaries(&self) -> Vec<(i64, i64)> {
        self.blocks
            .iter()
            .filter_map(|b| Some((b.first()?.timestamp, b.last()?.timestamp)))
            .collect()
    }

    /// Records of blocks `range`, concatenated in order.
    pub fn concat(&self, range: std::ops::Range<usize>) -> Vec<InteractionRecord> {
        self.blocks[range].iter().flatten().cloned().collect()
    }

    pub fn into_inner(self) -> Vec<Vec<InteractionRecord>> {
        self.blocks
    }
}

/// Stable-sorts by timestamp and cuts into `n` contiguous blocks. When the
/// size does not divide evenly, the earliest blocks take one extra record.
pub fn split_blocks(mut records: Vec<InteractionRecord>, n: usize) -> Result<BlockSet> {
    if n < 2 || records.len() < n {
        return Err(Error::TooFewRecords {
            needed: n.max(2),
            got: records.len(),
        });
    }
    records.sort_by_key(|r| r.timestamp);
    let base = records.len() / n;
    let extra = records.len() % n;
    let mut blocks = Vec::with_capacity(n);
    let mut rest = records.into_iter();
    for k in 0..n {
        let size = base + usize::from(k < extra);
        blocks.push(rest.by_ref().take(size).collect());
    }
    Ok(BlockSet { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn recs(ts: &[i64]) -> Vec<InteractionRecord> {
        ts.iter()
            .enumerate()
            .map(|(k, &t)| InteractionRecord::new(k, 0, 3.0, t))
            .collect()
    }

    #[test]
    fn even_split() {
        let b = split_blocks(recs(&(0..150).rev().collect::<Vec<_>>()), 15).unwrap();
        assert_eq!(b.sizes(), vec![10; 15]);
        let bounds = b.boundaries();
        for w in bounds.windows(2) {
            assert!(w[0].1 <= w[1].0);
        }
    }

    #[test]
    fn remainder_goes_first() {
        let b = split_blocks(recs(&(0..152).collect::<Vec<_>>()), 15).unwrap();
        let mut want = vec![10; 15];
        want[0] = 11;
        want[1] = 11;
        assert_eq!(b.sizes(), want);
    }

    #[test]
    fn two_blocks_sorted() {
        let b = split_blocks(recs(&[5, 1]), 2).unwrap();
        assert_eq!(b.block(0)[0].timestamp, 1);
        assert_eq!(b.block(1)[0].timestamp, 5);
    }

    #[test]
    fn too_few() {
        assert!(split_blocks(recs(&[1, 2]), 3).is_err());
        assert!(split_blocks(recs(&[1, 2]), 1).is_err());
    }

    #[test]
    fn ties_keep_input_order() {
        let b = split_blocks(recs(&[7, 7, 7, 7]), 2).unwrap();
        let users: Vec<_> = b.concat(0..2).iter().map(|r| r.user).collect();
        assert_eq!(users, vec![0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn concatenation_is_sorted_input(ts in prop::collection::vec(0i64..50, 2..120), n in 2usize..20) {
            prop_assume!(ts.len() >= n);
            let input = recs(&ts);
            let b = split_blocks(input.clone(), n).unwrap();
            let mut sorted = input;
            sorted.sort_by_key(|r| r.timestamp);
            prop_assert_eq!(b.concat(0..n), sorted);
            let sizes = b.sizes();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}
