//! Reservoir maintenance and the strategies that decide which past records
//! survive each incremental stage.

mod baselines;
mod reservoir;
mod select;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use baselines::{closest_to_center, gdumb_select, icarl_select, mir_select};
pub use reservoir::{reservoir_update, take_indices, Reservoir};
pub use select::{megg_select, megg_select_with, select_extreme, SelectionPlan};

/// What the incremental harness does at each stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Keep the records with the most extreme GGscores.
    Megg,
    /// Keep a uniform random subset.
    GDumb,
    /// Keep the records nearest the mean feature.
    ICaRL,
    /// Keep the records a foreseen update would hurt most.
    Mir,
    /// No replay: fine-tune the previous model on the new block only.
    FineTune,
    /// No reservoir limit: retrain on everything seen so far.
    FullBatch,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Megg,
        Strategy::GDumb,
        Strategy::ICaRL,
        Strategy::Mir,
        Strategy::FineTune,
        Strategy::FullBatch,
    ];

    /// Whether the strategy samples a subset of a bounded reservoir.
    pub fn is_replay(self) -> bool {
        !matches!(self, Strategy::FineTune | Strategy::FullBatch)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "megg" => Ok(Strategy::Megg),
            "gdumb" => Ok(Strategy::GDumb),
            "icarl" => Ok(Strategy::ICaRL),
            "mir" => Ok(Strategy::Mir),
            "finetune" | "ft" => Ok(Strategy::FineTune),
            "fullbatch" | "fb" => Ok(Strategy::FullBatch),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Megg => "megg",
            Strategy::GDumb => "gdumb",
            Strategy::ICaRL => "icarl",
            Strategy::Mir => "mir",
            Strategy::FineTune => "finetune",
            Strategy::FullBatch => "fullbatch",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("replay-all".parse::<Strategy>().is_err());
    }
}
