use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::{reference_vector, ReferenceVector, TrainingSnapshots};
use crate::nn::{Model, ParamSelection, ParamSet};

/// Which epoch snapshots and data feed the GGscore.
///
/// With `E` epoch snapshots `theta_1 .. theta_E`:
///
/// | scheme | scored at      | reference at   | reference data |
/// |--------|----------------|----------------|----------------|
/// | A      | `theta_{E-1}`  | `theta_E`      | `D`            |
/// | B      | `theta_{E-2}`  | `theta_{E-1}`  | `D`            |
/// | C      | `theta_{E-2}`  | `theta_E`      | `D`            |
/// | D      | `theta_{E-1}`  | `theta_E`      | `D` and `D'`   |
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[default]
    A,
    B,
    C,
    D,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::A, Scheme::B, Scheme::C, Scheme::D];

    pub fn letter(self) -> char {
        match self {
            Scheme::A => 'A',
            Scheme::B => 'B',
            Scheme::C => 'C',
            Scheme::D => 'D',
        }
    }

    /// `(scored epoch, reference epoch)` as 1-based indices for `epochs` snapshots.
    fn epochs(self, epochs: usize) -> Option<(usize, usize)> {
        let back = |k: usize| epochs.checked_sub(k).filter(|&e| e >= 1);
        match self {
            Scheme::A | Scheme::D => Some((back(1)?, epochs)),
            Scheme::B => Some((back(2)?, back(1)?)),
            Scheme::C => Some((back(2)?, epochs)),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scheme::A),
            "B" => Ok(Scheme::B),
            "C" => Ok(Scheme::C),
            "D" => Ok(Scheme::D),
            other => Err(Error::InvalidConfig(format!("unknown scheme {other:?}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Parameters and reference direction chosen by a [`Scheme`].
#[derive(Clone, Debug)]
pub struct ResolvedScheme<'a> {
    /// Parameters the per-sample gradients are taken at.
    pub theta_prime: &'a ParamSet,
    /// Parameters the reference gradient is taken at.
    pub theta_hat: &'a ParamSet,
    pub reference: ReferenceVector,
}

/// Picks the scoring parameters and computes the reference vector.
///
/// `incoming` is only read by scheme D, which fails with
/// [`Error::SchemeUnavailable`] when it is `None`.
pub fn scheme_resolve<'a, M: Model>(
    model: &M,
    scheme: Scheme,
    snapshots: &'a TrainingSnapshots,
    data: &[M::Sample],
    incoming: Option<&[M::Sample]>,
    selection: ParamSelection,
) -> Result<ResolvedScheme<'a>>
where
    M::Sample: Clone,
{
    let (scored, reference) = scheme.epochs(snapshots.len()).ok_or_else(|| {
        Error::SchemeUnavailable(
            scheme.letter(),
            format!("needs more than {} epoch snapshots", snapshots.len()),
        )
    })?;
    let theta_prime = snapshots.epoch(scored).expect("epoch index checked");
    let theta_hat = snapshots.epoch(reference).expect("epoch index checked");
    let reference = match scheme {
        Scheme::D => {
            let incoming = incoming.ok_or_else(|| {
                Error::SchemeUnavailable('D', "the incremental block is not available yet".into())
            })?;
            let mut all = data.to_vec();
            all.extend_from_slice(incoming);
            reference_vector(model, theta_hat, &all, selection)?
        }
        _ => reference_vector(model, theta_hat, data, selection)?,
    };
    Ok(ResolvedScheme {
        theta_prime,
        theta_hat,
        reference,
    })
}
