//! One-dimensional Gaussian toy model with a closed-form ABC posterior.
//!
//! `theta ~ N(prior_mean, prior_sd^2)`, one observation `y`, and
//! `x | theta ~ N(theta, sd^2)` with `sd = 1` for the expensive simulator and
//! `cheap_noise_sd` for the cheap one. Summary is `x`, distance `|x - y|`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::{exp, normal_cdf, normal_logpdf};
use crate::model::{CheapDraw, Draw, SimulatorPair};
use crate::rng::StreamRng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianToyConfig {
    pub y_obs: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub cheap_noise_sd: f64,
}

impl Default for GaussianToyConfig {
    fn default() -> Self {
        Self {
            y_obs: 0.0,
            prior_mean: 0.0,
            prior_sd: 1.0,
            cheap_noise_sd: 1.0,
        }
    }
}

impl GaussianToyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_sd > 0.0 && self.prior_sd.is_finite()) {
            return Err(Error::config("prior_sd", "must be positive"));
        }
        if !(self.cheap_noise_sd > 0.0 && self.cheap_noise_sd.is_finite()) {
            return Err(Error::config("cheap_noise_sd", "must be positive"));
        }
        if !self.y_obs.is_finite() {
            return Err(Error::config("y_obs", "must be finite"));
        }
        if !self.prior_mean.is_finite() {
            return Err(Error::config("prior_mean", "must be finite"));
        }
        Ok(())
    }
}

/// `theta + sd * z` with `z` standard normal. Cost 1.
pub fn simulate(theta: f64, sd: f64, rng: &mut StreamRng) -> Draw {
    let z: f64 = rng.sample(StandardNormal);
    Draw {
        summary: vec![theta + sd * z],
        cost: 1,
    }
}

#[derive(Debug, Clone)]
pub struct GaussianToy {
    config: GaussianToyConfig,
}

impl GaussianToy {
    pub fn new(config: GaussianToyConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &GaussianToyConfig {
        &self.config
    }

    fn distance(&self, x: &[f64]) -> f64 {
        match x {
            [x] => (x - self.config.y_obs).abs(),
            _ => f64::INFINITY,
        }
    }
}

impl SimulatorPair for GaussianToy {
    type State = ();

    fn dim(&self) -> usize {
        1
    }

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        let z: f64 = rng.sample(StandardNormal);
        vec![self.config.prior_mean + self.config.prior_sd * z]
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        normal_logpdf(theta[0], self.config.prior_mean, self.config.prior_sd)
    }

    fn simulate_cheap(&self, theta: &[f64], rng: &mut StreamRng) -> CheapDraw<()> {
        let Draw { summary, cost } = simulate(theta[0], self.config.cheap_noise_sd, rng);
        CheapDraw {
            summary,
            state: (),
            cost,
        }
    }

    fn simulate_expensive(&self, theta: &[f64], _state: &(), rng: &mut StreamRng) -> Draw {
        simulate(theta[0], 1.0, rng)
    }

    fn simulate_full(&self, theta: &[f64], rng: &mut StreamRng) -> Draw {
        simulate(theta[0], 1.0, rng)
    }

    fn distance1(&self, x1_summary: &[f64]) -> f64 {
        self.distance(x1_summary)
    }

    fn distance2(&self, x2_summary: &[f64]) -> f64 {
        self.distance(x2_summary)
    }
}

/// A normalized density tabulated on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GridDensity {
    /// Normalizes `values` (trapezoid rule) on the uniform `grid`.
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Self {
        assert!(grid.len() >= 2 && grid.len() == values.len());
        let h = grid[1] - grid[0];
        let mut cumulative = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 1..values.len() {
            acc += 0.5 * h * (values[k - 1] + values[k]);
            cumulative.push(acc);
        }
        let density = values.iter().map(|v| v / acc).collect();
        for c in &mut cumulative {
            *c /= acc;
        }
        Self {
            grid,
            density,
            cumulative,
        }
    }

    /// CDF, linear between grid points.
    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let h = self.grid[1] - self.grid[0];
        let pos = (x - lo) / h;
        let k = (pos as usize).min(self.grid.len() - 2);
        let frac = pos - k as f64;
        self.cumulative[k] + frac * (self.cumulative[k + 1] - self.cumulative[k])
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.grid[1] - self.grid[0];
        let n = self.grid.len();
        (0..n)
            .map(|k| {
                let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                w * h * self.density[k] * f(self.grid[k])
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.integrate(|x| (x - m) * (x - m))
    }
}

pub const QUADRATURE_POINTS: usize = 4097;

/// ABC posterior for tolerance `eps`, proportional to
/// `p(theta) * (Phi(y + eps - theta) - Phi(y - eps - theta))`, tabulated on
/// [`QUADRATURE_POINTS`] points spanning eight prior sds either side of the
/// prior mean.
pub fn abc_posterior_quadrature(config: &GaussianToyConfig, eps: f64) -> Result<GridDensity> {
    config.validate()?;
    if !(eps > 0.0) {
        return Err(Error::NonPositiveTolerance);
    }
    let (m, s, y) = (config.prior_mean, config.prior_sd, config.y_obs);
    let n = QUADRATURE_POINTS;
    let lo = m - 8.0 * s;
    let h = 16.0 * s / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|k| lo + h * k as f64).collect();
    let values = grid
        .iter()
        .map(|&t| {
            let prior = exp(normal_logpdf(t, m, s));
            let mass = if eps.is_infinite() {
                1.0
            } else {
                normal_cdf(y + eps - t) - normal_cdf(y - eps - t)
            };
            prior * mass
        })
        .collect();
    Ok(GridDensity::new(grid, values))
}

/// Mean and variance of the exact posterior (the `eps -> 0` limit).
pub fn exact_posterior(config: &GaussianToyConfig) -> (f64, f64) {
    let prec = 1.0 / (config.prior_sd * config.prior_sd) + 1.0;
    let mean = (config.prior_mean / (config.prior_sd * config.prior_sd) + config.y_obs) / prec;
    (mean, 1.0 / prec)
}
