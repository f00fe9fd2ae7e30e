//! Latent Ising field observed through a symmetric noise channel.
//!
//! A hidden `L x L` grid of spins follows the Ising law
//! `p(x) ∝ exp(theta_x * sum_{i~j} x_i x_j)` over 4-neighbour pairs with
//! free boundaries. Each observed spin agrees with the hidden one with
//! probability `e^theta_y / (e^theta_y + e^-theta_y)`. The summary is the
//! neighbour-product sum `S(y)` of the observed grid and the distance is
//! `|S(y_sim) - S(y_obs)|`.
//!
//! Simulation runs a single-site Gibbs chain from a uniform random grid.
//! The cheap simulator stops after `B` sweeps; the expensive one resumes the
//! same chain for the remaining sweeps. The chain has its own generator,
//! forked from the particle's stream, so the continued chain is bit-identical
//! to an uninterrupted run.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::math::{logistic, normal_logpdf};
use crate::model::{CheapDraw, Draw, SimulatorPair};
use crate::rng::{fork, StreamRng};
use crate::{Error, Result};

pub const DEFAULT_TOTAL_SWEEPS: u64 = 1000;
pub const PRIOR_SD: f64 = 5.0;

/// Square grid of `+1`/`-1` spins in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinGrid {
    side: usize,
    spins: Vec<i8>,
}

impl SpinGrid {
    pub fn filled(side: usize, value: i8) -> Self {
        assert!(value == 1 || value == -1);
        Self {
            side,
            spins: vec![value; side * side],
        }
    }

    pub fn from_spins(side: usize, spins: Vec<i8>) -> Result<Self> {
        if spins.len() != side * side {
            return Err(Error::Observation(alloc::format!(
                "expected {} spins for side {side}, got {}",
                side * side,
                spins.len()
            )));
        }
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Observation("spins must be +1 or -1".into()));
        }
        Ok(Self { side, spins })
    }

    /// Independent fair spins.
    pub fn random(side: usize, rng: &mut StreamRng) -> Self {
        let mut spins = Vec::with_capacity(side * side);
        let mut bits = 0u64;
        for k in 0..side * side {
            if k % 64 == 0 {
                bits = rng.next_u64();
            }
            spins.push(if bits & 1 == 1 { 1 } else { -1 });
            bits >>= 1;
        }
        Self { side, spins }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.spins[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: i8) {
        self.spins[row * self.side + col] = value;
    }

    /// Number of neighbour pairs, `2 L (L - 1)`.
    pub fn edge_count(&self) -> usize {
        2 * self.side * self.side.saturating_sub(1)
    }

    /// Sum of the four (fewer at the border) neighbouring spins.
    #[inline]
    pub fn neighbor_sum(&self, row: usize, col: usize) -> i32 {
        let l = self.side;
        let s = &self.spins;
        let i = row * l + col;
        let mut sum = 0i32;
        if row > 0 {
            sum += s[i - l] as i32;
        }
        if row + 1 < l {
            sum += s[i + l] as i32;
        }
        if col > 0 {
            sum += s[i - 1] as i32;
        }
        if col + 1 < l {
            sum += s[i + 1] as i32;
        }
        sum
    }

    /// `sum_{i~j} x_i x_j` over horizontal and vertical neighbour pairs.
    pub fn summary(&self) -> i64 {
        let l = self.side;
        let mut total = 0i64;
        for r in 0..l {
            for c in 0..l {
                let v = self.get(r, c) as i64;
                if c + 1 < l {
                    total += v * self.get(r, c + 1) as i64;
                }
                if r + 1 < l {
                    total += v * self.get(r + 1, c) as i64;
                }
            }
        }
        total
    }

    pub fn flipped(&self) -> Self {
        Self {
            side: self.side,
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }
}

/// `P(x_i = +1 | neighbours)` for neighbour sum `s`.
pub fn conditional_plus_probability(theta_x: f64, neighbor_sum: i32) -> f64 {
    logistic(2.0 * theta_x * neighbor_sum as f64)
}

/// Per-neighbour-sum acceptance thresholds on a 32-bit uniform. Entry `k`
/// is for neighbour sum `k - 4`.
fn thresholds(theta_x: f64) -> [u64; 9] {
    core::array::from_fn(|k| {
        let p = conditional_plus_probability(theta_x, k as i32 - 4);
        libm::round(p * 4294967296.0) as u64
    })
}

/// Site visiting order for [`gibbs_sweeps`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scan {
    /// Raster order, every site once per sweep.
    #[default]
    Raster,
    /// `L^2` uniformly chosen sites per sweep.
    Random,
}

/// Runs `n_sweeps` single-site Gibbs sweeps in place. Returns the cost
/// (`n_sweeps`).
pub fn gibbs_sweeps(grid: &mut SpinGrid, theta_x: f64, n_sweeps: u64, scan: Scan, rng: &mut StreamRng) -> u64 {
    let th = thresholds(theta_x);
    let l = grid.side;
    let n = l * l;
    for _ in 0..n_sweeps {
        match scan {
            Scan::Raster => {
                for r in 0..l {
                    for c in 0..l {
                        let s = grid.neighbor_sum(r, c);
                        let u = rng.next_u32() as u64;
                        grid.spins[r * l + c] = if u < th[(s + 4) as usize] { 1 } else { -1 };
                    }
                }
            }
            Scan::Random => {
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    let s = grid.neighbor_sum(i / l, i % l);
                    let u = rng.next_u32() as u64;
                    grid.spins[i] = if u < th[(s + 4) as usize] { 1 } else { -1 };
                }
            }
        }
    }
    n_sweeps
}

/// Copies `x`, keeping each spin with probability `sigma(2 theta_y)` and
/// flipping it otherwise.
pub fn noise_channel(x: &SpinGrid, theta_y: f64, rng: &mut StreamRng) -> SpinGrid {
    let agree = logistic(2.0 * theta_y);
    SpinGrid {
        side: x.side,
        spins: x
            .spins
            .iter()
            .map(|&s| if rng.random::<f64>() < agree { s } else { -s })
            .collect(),
    }
}

/// Generates a data set: Gibbs chain from a uniform grid, then the noise
/// channel.
pub fn generate(
    side: usize,
    theta_x: f64,
    theta_y: f64,
    sweeps: u64,
    scan: Scan,
    rng: &mut StreamRng,
) -> SpinGrid {
    let mut chain = fork(rng);
    let mut grid = SpinGrid::random(side, &mut chain);
    gibbs_sweeps(&mut grid, theta_x, sweeps, scan, &mut chain);
    noise_channel(&grid, theta_y, rng)
}

/// Gibbs chain after the cheap sweeps, with its generator.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingState {
    pub grid: SpinGrid,
    pub chain: StreamRng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsingConfig {
    pub side: usize,
    /// Cheap sweeps `B`.
    pub cheap_sweeps: u64,
    pub total_sweeps: u64,
    pub scan: Scan,
}

impl IsingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(Error::config("L", "must be at least 2"));
        }
        if self.total_sweeps == 0 {
            return Err(Error::config("total_sweeps", "must be positive"));
        }
        if self.cheap_sweeps > self.total_sweeps {
            return Err(Error::config("B", "must not exceed total_sweeps"));
        }
        Ok(())
    }
}

/// Parameters `(theta_x, theta_y)` with independent `N(0, 5^2)` priors.
#[derive(Debug, Clone)]
pub struct LatentIsing {
    config: IsingConfig,
    observed: i64,
}

impl LatentIsing {
    pub fn new(config: IsingConfig, observed: &SpinGrid) -> Result<Self> {
        config.validate()?;
        if observed.side() != config.side {
            return Err(Error::Observation(alloc::format!(
                "observed grid has side {}, configured L is {}",
                observed.side(),
                config.side
            )));
        }
        Ok(Self {
            config,
            observed: observed.summary(),
        })
    }

    pub fn config(&self) -> &IsingConfig {
        &self.config
    }

    pub fn observed_summary(&self) -> i64 {
        self.observed
    }

    fn observe(&self, grid: &SpinGrid, theta_y: f64, rng: &mut StreamRng) -> Vec<f64> {
        vec![noise_channel(grid, theta_y, rng).summary() as f64]
    }

    fn distance(&self, summary: &[f64]) -> f64 {
        match summary {
            [s] => (s - self.observed as f64).abs(),
            _ => f64::INFINITY,
        }
    }
}

impl SimulatorPair for LatentIsing {
    type State = IsingState;

    fn dim(&self) -> usize {
        2
    }

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        (0..2)
            .map(|_| PRIOR_SD * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        normal_logpdf(theta[0], 0.0, PRIOR_SD) + normal_logpdf(theta[1], 0.0, PRIOR_SD)
    }

    fn simulate_cheap(&self, theta: &[f64], rng: &mut StreamRng) -> CheapDraw<IsingState> {
        let mut chain = fork(rng);
        let mut grid = SpinGrid::random(self.config.side, &mut chain);
        let cost = gibbs_sweeps(&mut grid, theta[0], self.config.cheap_sweeps, self.config.scan, &mut chain);
        let summary = self.observe(&grid, theta[1], rng);
        CheapDraw {
            summary,
            state: IsingState { grid, chain },
            cost,
        }
    }

    fn simulate_expensive(&self, theta: &[f64], state: &IsingState, rng: &mut StreamRng) -> Draw {
        let IsingState { mut grid, mut chain } = state.clone();
        let extra = self.config.total_sweeps - self.config.cheap_sweeps;
        let cost = gibbs_sweeps(&mut grid, theta[0], extra, self.config.scan, &mut chain);
        Draw {
            summary: self.observe(&grid, theta[1], rng),
            cost,
        }
    }

    fn simulate_full(&self, theta: &[f64], rng: &mut StreamRng) -> Draw {
        let mut chain = fork(rng);
        let mut grid = SpinGrid::random(self.config.side, &mut chain);
        let cost = gibbs_sweeps(&mut grid, theta[0], self.config.total_sweeps, self.config.scan, &mut chain);
        Draw {
            summary: self.observe(&grid, theta[1], rng),
            cost,
        }
    }

    fn distance1(&self, x1_summary: &[f64]) -> f64 {
        self.distance(x1_summary)
    }

    fn distance2(&self, x2_summary: &[f64]) -> f64 {
        self.distance(x2_summary)
    }
}
