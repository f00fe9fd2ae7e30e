//! Stratified resampling, effective sample size, and the unique-particle
//! count used to pick the next tolerance.

use alloc::vec::Vec;

use crate::math::compensated_sum;
use crate::particle::{check_normalized, within_tolerance};
use crate::{Error, Result};

/// Pre-drawn stratified uniforms and the indices they select.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    pub v: Vec<f64>,
    pub indices: Vec<usize>,
}

/// Stratified resampling against the cumulative weights in storage order.
///
/// Draw `i` (zero-based) uses the point `(i + v[i]) / N`. Any index whose
/// weight is at least `2/N` is selected for every `v` (its interval of the
/// cumulative weights then covers a whole stratum); zero-weight indices are
/// never selected. The output is nondecreasing.
pub fn stratified_resample(weights: &[f64], v: &[f64]) -> Result<Vec<usize>> {
    let n = weights.len();
    if v.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: v.len(),
        });
    }
    if n == 0 || weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Extinct);
    }
    check_normalized(weights)?;
    Ok(stratified_unchecked(weights, v))
}

// Assumes equal lengths and at least one positive weight. Weights need not
// be normalized: stratum points are scaled by the actual total.
pub(crate) fn stratified_unchecked(weights: &[f64], v: &[f64]) -> Vec<usize> {
    let n = weights.len();
    let total = compensated_sum(weights.iter().copied());
    let last_alive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let mut out = Vec::with_capacity(n);
    let mut j = 0usize;
    let mut cum = weights[0];
    for (i, &vi) in v.iter().enumerate() {
        let point = (i as f64 + vi) / n as f64 * total;
        while point >= cum && j < last_alive {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// `1 / sum(w^2)` for normalized weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::Extinct);
    }
    check_normalized(weights)?;
    Ok(1.0 / compensated_sum(weights.iter().map(|w| w * w)))
}

/// Number of distinct source indices in a nondecreasing index vector.
pub fn count_unique_sorted(indices: &[usize]) -> usize {
    if indices.is_empty() {
        return 0;
    }
    1 + indices.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Number of distinct ids among the selected indices.
pub fn count_unique_ids(indices: &[usize], ids: &[u64]) -> usize {
    let mut selected: Vec<u64> = indices.iter().map(|&i| ids[i]).collect();
    selected.sort_unstable();
    selected.dedup();
    selected.len()
}

/// Number of distinct particles that would survive reweighting by
/// `prev_weights[i] * 1(d2[i] within eps)` followed by stratified resampling
/// with the same `v`. Every index counts as its own particle. Returns 0 when
/// nothing survives.
pub fn unique_after_resample(d2: &[f64], prev_weights: &[f64], eps: f64, v: &[f64]) -> Result<usize> {
    let ids: Vec<u64> = (0..d2.len() as u64).collect();
    unique_ids_after_resample(d2, prev_weights, &ids, eps, v)
}

/// As [`unique_after_resample`], counting particles that share an id (copies
/// from earlier resampling) once.
pub fn unique_ids_after_resample(
    d2: &[f64],
    prev_weights: &[f64],
    ids: &[u64],
    eps: f64,
    v: &[f64],
) -> Result<usize> {
    let n = d2.len();
    for len in [prev_weights.len(), ids.len(), v.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, got: len });
        }
    }
    let hypothetical = reweight(d2, prev_weights, eps);
    if hypothetical.iter().all(|&w| w == 0.0) {
        return Ok(0);
    }
    Ok(count_unique_ids(&stratified_unchecked(&hypothetical, v), ids))
}

/// Indicator reweighting `w * 1(d within eps)`, unnormalized.
pub fn reweight(d2: &[f64], prev_weights: &[f64], eps: f64) -> Vec<f64> {
    d2.iter()
        .zip(prev_weights)
        .map(|(&d, &w)| if within_tolerance(d, eps) { w } else { 0.0 })
        .collect()
}
