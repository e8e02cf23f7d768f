//! Building blocks shared by the backbones.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Cross-network layer: `x0 * (w . x) + b + x`.
pub fn cross_layer(x0: &[f64], x: &[f64], w: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = x0.len();
    if x.len() != n || w.len() != n || b.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "cross layer dims x0={n} x={} w={} b={}",
            x.len(),
            w.len(),
            b.len()
        )));
    }
    let s = crate::nn::params::dot(w, x);
    Ok(x0
        .iter()
        .zip(x)
        .zip(b)
        .map(|((&a, &xi), &bi)| a * s + bi + xi)
        .collect())
}

/// Bi-interaction pooling: `0.5 * ((sum v)^2 - sum v^2)` elementwise.
pub fn bi_interaction(embeddings: &[&[f64]]) -> Result<Vec<f64>> {
    if embeddings.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "bi-interaction needs at least 2 vectors, got {}",
            embeddings.len()
        )));
    }
    let d = embeddings[0].len();
    if embeddings.iter().any(|v| v.len() != d) {
        return Err(Error::ShapeMismatch(
            "bi-interaction inputs differ in length".into(),
        ));
    }
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for v in embeddings {
        for j in 0..d {
            sum[j] += v[j];
            sum_sq[j] += v[j] * v[j];
        }
    }
    Ok(sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| 0.5 * (s * s - q))
        .collect())
}

/// `out = W x + b` for a row-major `W` of shape (out, in).
#[inline]
pub(crate) fn affine(w: &Matrix, b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for (r, &bias) in b.iter().enumerate().take(w.rows()) {
        out.push(crate::nn::params::dot(w.row(r), x) + bias);
    }
}

#[inline]
pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Fills `m` from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub(crate) fn init_uniform<R: Rng>(m: &mut Matrix, fan_in: usize, rng: &mut R) {
    let limit = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    for v in m.as_mut_slice() {
        *v = dist.sample(rng);
    }
}
