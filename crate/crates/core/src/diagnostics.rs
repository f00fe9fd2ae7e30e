//! Checks of a weighted particle cloud against a reference distribution.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Kolmogorov-Smirnov distance between the weighted empirical CDF of
/// `values` and a continuous `cdf`. Weights need not be normalized.
pub fn weighted_ks_distance(values: &[f64], weights: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            got: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Extinct);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut below = 0.0;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    while k < order.len() {
        let x = values[order[k]];
        let f = cdf(x);
        worst = worst.max((f - below / total).abs());
        while k < order.len() && values[order[k]] == x {
            below += weights[order[k]];
            k += 1;
        }
        worst = worst.max((f - below / total).abs());
    }
    Ok(worst)
}

/// Weighted mean and variance (1/n convention) of `values`.
pub fn weighted_moments(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total;
    let var = values
        .iter()
        .zip(weights)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum::<f64>()
        / total;
    (mean, var)
}
