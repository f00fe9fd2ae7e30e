//! Particles, populations, cost accounting and run traces.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::math::compensated_sum;
use crate::{Error, Result};

/// Maximum deviation of a normalized weight vector's sum from one.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// The indicator kernel's acceptance predicate.
///
/// A distance passes when `d < eps`. The single exception is `eps == 0`,
/// which accepts exact matches (`d == 0`) so that integer-valued distances
/// can terminate at a zero tolerance. Infinite or NaN distances never pass a
/// finite tolerance, and `+inf` does not pass `+inf`.
#[inline]
pub fn within_tolerance(d: f64, eps: f64) -> bool {
    d < eps || (eps == 0.0 && d == 0.0)
}

/// Monte Carlo ABC likelihood estimate under the indicator kernel: the
/// fraction of simulated distances that pass `eps`.
pub fn abc_likelihood_estimate(dists: &[f64], eps: f64) -> Result<f64> {
    if dists.is_empty() {
        return Err(Error::NoSimulations);
    }
    let hits = dists.iter().filter(|&&d| within_tolerance(d, eps)).count();
    Ok(hits as f64 / dists.len() as f64)
}

/// One SMC particle: a parameter vector with the summaries and distances of
/// its cheap (`x1`) and expensive (`x2`) simulations.
///
/// `x1_state` is the model's continuation state from the cheap simulation;
/// it is `None` for particles that never ran one (single-simulator ABC-SMC).
#[derive(Debug, Clone, PartialEq)]
pub struct Particle<S> {
    /// Shared by the copies resampling makes of one particle; a newly
    /// simulated particle gets a fresh id from [`particle_id`].
    pub id: u64,
    pub theta: Vec<f64>,
    pub x1_summary: Vec<f64>,
    pub x2_summary: Vec<f64>,
    pub x1_state: Option<S>,
    pub d1: f64,
    pub d2: f64,
    pub weight: f64,
}

/// Id for the particle created at `iteration` in slot `index`.
pub fn particle_id(iteration: usize, index: usize) -> u64 {
    ((iteration as u64) << 32) | index as u64
}

impl<S> Particle<S> {
    pub fn is_alive(&self) -> bool {
        self.weight > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population<S> {
    pub particles: Vec<Particle<S>>,
    pub eps1: f64,
    pub eps2: f64,
    pub t: usize,
}

impl<S> Population<S> {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.particles.iter().map(|p| p.id).collect()
    }

    pub fn d2_values(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.d2).collect()
    }

    /// Sum of the weights, compensated.
    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.particles.iter().map(|p| p.weight))
    }
}

/// Rescales `weights` in place to sum to one.
pub fn normalize(weights: &mut [f64]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Unnormalized(f64::NAN));
    }
    let total = compensated_sum(weights.iter().copied());
    if total <= 0.0 {
        return Err(Error::Extinct);
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}

pub(crate) fn check_normalized(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Unnormalized(f64::NAN));
    }
    let total = compensated_sum(weights.iter().copied());
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Unnormalized(total));
    }
    Ok(())
}

/// Simulation stage a cost is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    /// Simulations drawing the initial population.
    Init,
    /// Cheap-simulator calls during moves.
    Cheap,
    /// Expensive (or only) simulator calls during moves.
    Expensive,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Init, Stage::Cheap, Stage::Expensive];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::Cheap => "cheap",
            Stage::Expensive => "expensive",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Stage::ALL.into_iter().find(|s| s.label() == label)
    }
}

/// Cumulative simulation cost in model units (Euler-Maruyama steps, Gibbs
/// sweeps, simulator calls).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostMeter {
    total: u64,
    by_stage: BTreeMap<Stage, u64>,
}

impl CostMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, stage: Stage, cost: u64) {
        self.total += cost;
        *self.by_stage.entry(stage).or_insert(0) += cost;
    }

    pub fn merge(&mut self, other: &CostMeter) {
        for (&stage, &cost) in &other.by_stage {
            self.add(stage, cost);
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn stage(&self, stage: Stage) -> u64 {
        self.by_stage.get(&stage).copied().unwrap_or(0)
    }

    pub fn by_stage(&self) -> impl Iterator<Item = (Stage, u64)> + '_ {
        self.by_stage.iter().map(|(&s, &c)| (s, c))
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Running,
    /// The terminal tolerance was reached.
    Finished,
    BudgetExhausted,
    /// Too many consecutive iterations without a single accepted move.
    Stalled,
}

impl RunStatus {
    pub fn label(self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Finished => "finished",
            RunStatus::BudgetExhausted => "budget_exhausted",
            RunStatus::Stalled => "stalled",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        [
            RunStatus::Running,
            RunStatus::Finished,
            RunStatus::BudgetExhausted,
            RunStatus::Stalled,
        ]
        .into_iter()
        .find(|s| s.label() == label)
    }
}

/// One row per SMC iteration. Row 0 describes the initial population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub cumulative_cost: u64,
    /// Number of expensive simulations run by the move step.
    pub n_stage1_pass: usize,
    pub n_stage2_accept: usize,
    pub n_unique: usize,
    /// ESS of the reweighted, normalized weights before resampling.
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub n_particles: usize,
    pub rows: Vec<TraceRow>,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn new(n_particles: usize) -> Self {
        Self {
            n_particles,
            rows: Vec::new(),
            status: RunStatus::Running,
        }
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}
