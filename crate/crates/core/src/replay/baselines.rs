//! Random, feature-center, and maximally-interfered retrieval baselines.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::influence::mbgd_step;
use crate::nn::{sample_loss, Model, ParamSet};

fn check_k(k: usize, n: usize) -> Result<()> {
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    Ok(())
}

/// `k` of `n` indices uniformly without replacement, ascending.
pub fn gdumb_select<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_k(k, n)?;
    let mut picked = rand::seq::index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Indices of the `k` vectors closest (Euclidean) to their mean, ascending.
pub fn closest_to_center(features: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    check_k(k, features.len())?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::ShapeMismatch(format!(
            "feature of length {} among features of length {dim}",
            bad.len()
        )));
    }
    let mut center = vec![0.0; dim];
    for f in features {
        for (c, v) in center.iter_mut().zip(f) {
            *c += v;
        }
    }
    let n = features.len() as f64;
    center.iter_mut().for_each(|c| *c /= n);
    let dist: Vec<f64> = features
        .iter()
        .map(|f| f.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// Keeps the `k` samples whose last-layer features lie closest to the mean
/// feature at `params`.
pub fn icarl_select<M: Model>(
    model: &M,
    params: &ParamSet,
    data: &[M::Sample],
    k: usize,
) -> Result<Vec<usize>> {
    check_k(k, data.len())?;
    let features: Vec<Vec<f64>> = data
        .par_iter()
        .enumerate()
        .map(|(i, z)| model.feature(params, z).map_err(|e| e.at_sample(i)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    closest_to_center(&features, k)
}

/// Keeps the `k` samples whose loss rises most under a foreseen update: one
/// mean-gradient step of size `lr` on the whole incoming block.
pub fn mir_select<M: Model>(
    model: &M,
    params: &ParamSet,
    data: &[M::Sample],
    incoming: &[M::Sample],
    k: usize,
    lr: f64,
) -> Result<Vec<usize>> {
    check_k(k, data.len())?;
    if incoming.is_empty() {
        return Err(Error::EmptyIncrement);
    }
    let foreseen = mbgd_step(model, params, incoming, lr)?;
    let deltas: Vec<f64> = data
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            Ok(sample_loss(model, &foreseen, z)? - sample_loss(model, params, z)?)
                .map_err(|e: Error| e.at_sample(i))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| deltas[b].total_cmp(&deltas[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionRecord;
    use crate::model::BiasModel;
    use crate::nn::LossKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn targets(ys: &[f64]) -> Vec<InteractionRecord> {
        ys.iter()
            .enumerate()
            .map(|(k, &y)| InteractionRecord::new(0, 0, y, k as i64))
            .collect()
    }

    #[test]
    fn gdumb_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(gdumb_select(5, 5, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(gdumb_select(5, 0, &mut rng).unwrap().is_empty());
        assert!(matches!(
            gdumb_select(5, 6, &mut rng),
            Err(Error::KTooLarge { .. })
        ));
        let a = gdumb_select(100, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gdumb_select(100, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gdumb_inclusion_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 10];
        let trials = 10_000;
        for _ in 0..trials {
            for i in gdumb_select(10, 5, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / trials as f64;
            assert!((f - 0.5).abs() <= 0.02, "{f}");
        }
    }

    #[test]
    fn center_distances() {
        let f = vec![vec![0.0], vec![0.0], vec![10.0]];
        assert_eq!(closest_to_center(&f, 2).unwrap(), vec![0, 1]);
        assert_eq!(closest_to_center(&f, 3).unwrap(), vec![0, 1, 2]);
        let same = vec![vec![1.0, 2.0]; 4];
        assert_eq!(closest_to_center(&same, 2).unwrap(), vec![0, 1]);
        assert!(closest_to_center(&[vec![1.0], vec![1.0, 2.0]], 1).is_err());
    }

    #[test]
    fn mir_prefers_samples_the_step_hurts() {
        let m = BiasModel::new(LossKind::SquaredError);
        let data = targets(&[0.0, 5.0, 0.0, 5.0]);
        // Incoming targets pull the bias from 2.5 down towards 0.
        let incoming = targets(&[0.0, 0.0]);
        let picked = mir_select(&m, &m.params(2.5), &data, &incoming, 2, 0.5).unwrap();
        assert_eq!(picked, vec![1, 3]);
        let all = mir_select(&m, &m.params(2.5), &data, &incoming, 4, 0.5).unwrap();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(matches!(
            mir_select(&m, &m.params(2.5), &data, &[], 1, 0.5),
            Err(Error::EmptyIncrement)
        ));
    }

    #[test]
    fn mir_with_a_stationary_step_uses_index_order() {
        let m = BiasModel::new(LossKind::SquaredError);
        let data = targets(&[0.0, 5.0, 1.0]);
        // Incoming mean equals the bias, so the foreseen step is zero.
        let incoming = targets(&[1.0, 3.0]);
        let picked = mir_select(&m, &m.params(2.0), &data, &incoming, 2, 0.5).unwrap();
        assert_eq!(picked, vec![0, 1]);
    }
}
