use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::InteractionRecord;
use crate::error::{Error, Result};

/// How explicit ratings map to binary labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelRule {
    /// Ratings 1-5: 1 and 2 are negative, 4 and 5 positive, 3 is unlabeled.
    #[default]
    MovieLens,
    /// Behavior levels 1-4: 1 and 2 are negative, 3 and 4 positive.
    Taobao,
}

impl FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "movielens" | "ml" => Ok(LabelRule::MovieLens),
            "taobao" => Ok(LabelRule::Taobao),
            other => Err(Error::InvalidConfig(format!(
                "unknown label rule {other:?}"
            ))),
        }
    }
}

impl fmt::Display for LabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelRule::MovieLens => "movielens",
            LabelRule::Taobao => "taobao",
        })
    }
}

/// Binary label for a rating, or `None` when the rule leaves it unlabeled.
pub fn binarize(rating: f64, rule: LabelRule) -> Result<Option<u8>> {
    let max = match rule {
        LabelRule::MovieLens => 5.0,
        LabelRule::Taobao => 4.0,
    };
    if rating.fract() != 0.0 || !(1.0..=max).contains(&rating) {
        return Err(Error::InvalidRating(rating));
    }
    Ok(match (rule, rating as u8) {
        (_, 1 | 2) => Some(0),
        (LabelRule::MovieLens, 3) => None,
        _ => Some(1),
    })
}

/// Labels every record in place. Ratings outside the rule's domain leave the
/// record unlabeled.
pub fn label_records(records: &mut [InteractionRecord], rule: LabelRule) {
    for r in records {
        r.label = binarize(r.rating, rule).ok().flatten();
    }
}

/// Rating bucket for a listen count: 30+ -> 5, 15-29 -> 4, 5-14 -> 3, 1-4 -> 2.
///
/// A zero count has no interaction to attach a rating to and yields `None`.
pub fn frequency_rating(count: u64) -> Option<f64> {
    match count {
        0 => None,
        1..=4 => Some(2.0),
        5..=14 => Some(3.0),
        15..=29 => Some(4.0),
        _ => Some(5.0),
    }
}

/// Collapses raw listen events `(user, item, timestamp)` into one rated record
/// per user-item pair, stamped with the pair's last event and ordered by time.
pub fn rate_by_frequency(
    events: &[(usize, usize, i64)],
    rule: LabelRule,
) -> Vec<InteractionRecord> {
    let mut pairs: HashMap<(usize, usize), (u64, i64)> = HashMap::new();
    for &(u, i, ts) in events {
        let e = pairs.entry((u, i)).or_insert((0, ts));
        e.0 += 1;
        e.1 = e.1.max(ts);
    }
    let mut out: Vec<InteractionRecord> = pairs
        .into_iter()
        .filter_map(|((u, i), (count, ts))| {
            let rating = frequency_rating(count)?;
            Some(
                InteractionRecord::new(u, i, rating, ts)
                    .with_label(binarize(rating, rule).ok().flatten()),
            )
        })
        .collect();
    out.sort_by_key(|r| (r.timestamp, r.user, r.item));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn movielens_rule() {
        assert_eq!(binarize(5.0, LabelRule::MovieLens).unwrap(), Some(1));
        assert_eq!(binarize(4.0, LabelRule::MovieLens).unwrap(), Some(1));
        assert_eq!(binarize(1.0, LabelRule::MovieLens).unwrap(), Some(0));
        assert_eq!(binarize(2.0, LabelRule::MovieLens).unwrap(), Some(0));
        assert_eq!(binarize(3.0, LabelRule::MovieLens).unwrap(), None);
    }

    #[test]
    fn taobao_rule() {
        assert_eq!(binarize(3.0, LabelRule::Taobao).unwrap(), Some(1));
        assert_eq!(binarize(4.0, LabelRule::Taobao).unwrap(), Some(1));
        assert_eq!(binarize(2.0, LabelRule::Taobao).unwrap(), Some(0));
        assert!(matches!(
            binarize(5.0, LabelRule::Taobao),
            Err(Error::InvalidRating(_))
        ));
    }

    #[test]
    fn out_of_domain_ratings() {
        for r in [0.0, 6.0, 3.5, -1.0, f64::NAN] {
            assert!(binarize(r, LabelRule::MovieLens).is_err(), "{r}");
        }
    }

    #[test]
    fn labels_are_binary() {
        for rule in [LabelRule::MovieLens, LabelRule::Taobao] {
            for r in 1..=5 {
                if let Ok(Some(l)) = binarize(r as f64, rule) {
                    assert!(l <= 1);
                }
            }
        }
    }

    #[test]
    fn frequency_buckets() {
        assert_eq!(frequency_rating(0), None);
        assert_eq!(frequency_rating(1), Some(2.0));
        assert_eq!(frequency_rating(4), Some(2.0));
        assert_eq!(frequency_rating(5), Some(3.0));
        assert_eq!(frequency_rating(14), Some(3.0));
        assert_eq!(frequency_rating(15), Some(4.0));
        assert_eq!(frequency_rating(29), Some(4.0));
        assert_eq!(frequency_rating(30), Some(5.0));
    }

    #[test]
    fn frequency_records() {
        let mut events = vec![(0, 0, 10); 30];
        events.push((0, 1, 3));
        events.push((1, 0, 99));
        let recs = rate_by_frequency(&events, LabelRule::MovieLens);
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].item, 1);
        assert_eq!(recs[0].rating, 2.0);
        assert_eq!(recs[1].rating, 5.0);
        assert_eq!(recs[1].label, Some(1));
        assert_eq!(recs[2].timestamp, 99);
    }
}
