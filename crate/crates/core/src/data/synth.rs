//! Synthetic corpora: a latent-factor rating world whose user tastes drift
//! over time, and a small two-class dense dataset.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::label::{binarize, LabelRule};
use super::InteractionRecord;
use crate::error::{Error, Result};
use crate::model::FeatureSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_records: usize,
    pub latent_dim: usize,
    /// Number of equal-length time phases; user latents move between phases.
    pub phases: usize,
    /// Fraction of each user latent replaced by fresh noise at every phase
    /// change. 0 keeps the world static, 1 redraws tastes completely.
    pub drift: f64,
    /// Scale of the user-item interaction term in rating units.
    pub interaction_scale: f64,
    /// Standard deviation of per-rating noise before rounding.
    pub noise: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            num_users: 300,
            num_items: 500,
            num_records: 30_000,
            latent_dim: 8,
            phases: 15,
            drift: 0.5,
            interaction_scale: 2.0,
            noise: 0.3,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.num_users == 0 || self.num_items == 0 {
            return bad("synthetic world needs at least one user and one item");
        }
        if self.num_records == 0 || self.latent_dim == 0 || self.phases == 0 {
            return bad("num_records, latent_dim and phases must be positive");
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return bad("drift must lie in [0, 1]");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a finite non-negative number");
        }
        if !self.interaction_scale.is_finite() {
            return bad("interaction_scale must be finite");
        }
        Ok(())
    }
}

const BASE_TIMESTAMP: i64 = 1_000_000_000;
const GLOBAL_MEAN: f64 = 3.5;

fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize, sd: f64) -> Vec<Vec<f64>> {
    let n = Normal::new(0.0, sd).expect("finite sd");
    (0..rows)
        .map(|_| (0..dim).map(|_| n.sample(rng)).collect())
        .collect()
}

/// Generates a chronologically ordered rating corpus with MovieLens-style labels.
///
/// `rating = clip(round(3.5 + b_u + b_i + s * p_u . q_i + noise), 1, 5)` where
/// the user latent `p_u` is mixed with fresh noise at each phase boundary.
/// Users are drawn uniformly and items with a mild popularity skew.
pub fn synth_drift(cfg: &DriftConfig, seed: u64) -> Result<Vec<InteractionRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = cfg.latent_dim;
    let sd = 1.0 / (k as f64).sqrt();
    let mut users = gaussian_rows(&mut rng, cfg.num_users, k, sd);
    let items = gaussian_rows(&mut rng, cfg.num_items, k, sd);
    let user_bias: Vec<f64> = gaussian_rows(&mut rng, cfg.num_users, 1, 0.3)
        .into_iter()
        .map(|v| v[0])
        .collect();
    let item_bias: Vec<f64> = gaussian_rows(&mut rng, cfg.num_items, 1, 0.5)
        .into_iter()
        .map(|v| v[0])
        .collect();

    // Popularity weights ~ 1/(rank+10), cumulated for inverse-CDF sampling.
    let mut cdf: Vec<f64> = (0..cfg.num_items)
        .map(|r| 1.0 / (r as f64 + 10.0))
        .collect();
    for j in 1..cdf.len() {
        cdf[j] += cdf[j - 1];
    }
    let total = *cdf.last().expect("non-empty");

    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("finite sd");
    let fresh = Normal::new(0.0, sd).expect("finite sd");
    let keep = (1.0 - cfg.drift * cfg.drift).sqrt();
    let per_phase = cfg.num_records.div_ceil(cfg.phases);
    let mut out = Vec::with_capacity(cfg.num_records);
    let mut ts = BASE_TIMESTAMP;
    for n in 0..cfg.num_records {
        if n > 0 && n % per_phase == 0 && cfg.drift > 0.0 {
            for p in &mut users {
                for v in p.iter_mut() {
                    *v = keep * *v + cfg.drift * fresh.sample(&mut rng);
                }
            }
        }
        let u = rng.random_range(0..cfg.num_users);
        let x = rng.random::<f64>() * total;
        let i = cdf.partition_point(|&c| c < x).min(cfg.num_items - 1);
        let affinity: f64 = users[u].iter().zip(&items[i]).map(|(a, b)| a * b).sum();
        let eps = if cfg.noise > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        let raw =
            GLOBAL_MEAN + user_bias[u] + item_bias[i] + cfg.interaction_scale * affinity + eps;
        let rating = raw.round().clamp(1.0, 5.0);
        ts += rng.random_range(1..=120);
        let label = binarize(rating, LabelRule::MovieLens).ok().flatten();
        out.push(InteractionRecord::new(u, i, rating, ts).with_label(label));
    }
    Ok(out)
}

/// Two overlapping Gaussian classes in `dim` dimensions, balanced, labeled 0/1.
///
/// Class means sit at `+-separation/2` along a random unit direction; the
/// remaining variance is isotropic with unit scale.
pub fn synth_two_class(
    n: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Vec<FeatureSample>> {
    if n < 2 || dim == 0 {
        return Err(Error::InvalidConfig(
            "two-class set needs at least 2 samples and 1 dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut dir: Vec<f64> = (0..dim).map(|_| std.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    dir.iter_mut().for_each(|v| *v /= norm);
    Ok((0..n)
        .map(|k| {
            let y = (k % 2) as f64;
            let sign = if y == 1.0 { 0.5 } else { -0.5 };
            let x = dir
                .iter()
                .map(|d| sign * separation * d + std.sample(&mut rng))
                .collect();
            FeatureSample { x, y }
        })
        .collect())
}
