//! Lotka-Volterra predator-prey model.
//!
//! Reactions on predators `X` and prey `Y`: prey birth at rate `th1 * Y`
//! (`Y += 1`), predation at rate `th2 * X * Y` (`X += 1, Y -= 1`), predator
//! death at rate `th3 * X` (`X -= 1`). Parameters are the log rates with a
//! uniform prior on `[-6, 2]^3`.
//!
//! The exact jump process is simulated with Gillespie's algorithm and the
//! chemical Langevin approximation with Euler-Maruyama. Both simulators of
//! the pair are Euler-Maruyama runs at different step sizes; the expensive
//! one does not continue from the cheap one.
//!
//! Summaries are nine raw statistics of the observed series; the distance
//! divides the difference to the observed statistics by a per-statistic
//! scale (from a pilot run) and takes the Euclidean norm.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::engine::Executor;
use crate::math::{exp, ln, sqrt};
use crate::model::{CheapDraw, Draw, SimulatorPair};
use crate::rng::{stream, Purpose, StreamRng};
use crate::{Error, Result};

pub const LOG_PRIOR_LOW: f64 = -6.0;
pub const LOG_PRIOR_HIGH: f64 = 2.0;
pub const N_STATS: usize = 9;
/// A population above this size counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e7;
/// Rates used to generate synthetic data.
pub const DEFAULT_RATES: [f64; 3] = [1.0, 0.005, 0.6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvSettings {
    pub x0: u64,
    pub y0: u64,
    pub horizon: f64,
    pub obs_interval: f64,
}

impl Default for LvSettings {
    fn default() -> Self {
        Self {
            x0: 50,
            y0: 100,
            horizon: 30.0,
            obs_interval: 2.0,
        }
    }
}

impl LvSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.obs_interval > 0.0 && self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("horizon", "needs horizon >= 0 and obs_interval > 0"));
        }
        let k = self.horizon / self.obs_interval;
        if (k - libm::round(k)).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::config("horizon", "must be a multiple of obs_interval"));
        }
        Ok(())
    }

    /// Number of observation times, including time 0.
    pub fn n_obs(&self) -> usize {
        libm::round(self.horizon / self.obs_interval) as usize + 1
    }

    pub fn obs_times(&self) -> Vec<f64> {
        (0..self.n_obs()).map(|k| k as f64 * self.obs_interval).collect()
    }
}

/// Predator and prey counts at the observation times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub diverged: bool,
    /// Reaction events (Gillespie) or integration steps (Euler-Maruyama).
    pub steps_used: u64,
}

/// Exact simulation. Stops and flags divergence after `max_events` events.
pub fn gillespie(rates: [f64; 3], settings: &LvSettings, max_events: u64, rng: &mut StreamRng) -> Trajectory {
    let times = settings.obs_times();
    let n_obs = times.len();
    let (mut x, mut y) = (settings.x0, settings.y0);
    let mut xs = Vec::with_capacity(n_obs);
    let mut ys = Vec::with_capacity(n_obs);
    let mut t = 0.0;
    let mut events = 0u64;
    let mut diverged = false;
    xs.push(x as f64);
    ys.push(y as f64);
    while xs.len() < n_obs {
        let h1 = rates[0] * y as f64;
        let h2 = rates[1] * x as f64 * y as f64;
        let h3 = rates[2] * x as f64;
        let total = h1 + h2 + h3;
        let t_next = if total > 0.0 {
            let e: f64 = rng.sample(Exp1);
            t + e / total
        } else {
            f64::INFINITY
        };
        while xs.len() < n_obs && times[xs.len()] < t_next {
            xs.push(x as f64);
            ys.push(y as f64);
        }
        if xs.len() == n_obs {
            break;
        }
        if events == max_events {
            diverged = true;
            break;
        }
        let u: f64 = rng.random::<f64>() * total;
        if u < h1 {
            y += 1;
        } else if u < h1 + h2 {
            x += 1;
            y -= 1;
        } else {
            x -= 1;
        }
        events += 1;
        t = t_next;
    }
    Trajectory {
        times,
        x: xs,
        y: ys,
        diverged,
        steps_used: events,
    }
}

/// Euler-Maruyama step size with a whole number of steps per observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSchedule {
    pub step: f64,
    pub steps_per_obs: u64,
    pub n_obs: usize,
}

impl EmSchedule {
    pub fn new(step: f64, settings: &LvSettings) -> Result<Self> {
        settings.validate()?;
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Schedule(format!("step size must be positive, got {step}")));
        }
        let k = settings.obs_interval / step;
        let steps_per_obs = libm::round(k);
        if steps_per_obs < 1.0 || (k - steps_per_obs).abs() > 1e-6 {
            return Err(Error::Schedule(format!(
                "observation interval {} is not a whole number of steps of {step}",
                settings.obs_interval
            )));
        }
        Ok(Self {
            step,
            steps_per_obs: steps_per_obs as u64,
            n_obs: settings.n_obs(),
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.steps_per_obs * (self.n_obs as u64 - 1)
    }
}

/// Chemical Langevin equation integrated with Euler-Maruyama. Hazards are
/// clamped at zero; the predation noise term is shared between the two
/// equations. With `noise` off this is Euler's method on the rate equations.
///
/// The run stops as diverged once a population is non-finite, exceeds
/// [`DIVERGENCE_LIMIT`], or both populations are negative.
pub fn cle_euler_maruyama(
    rates: [f64; 3],
    schedule: &EmSchedule,
    settings: &LvSettings,
    noise: bool,
    rng: &mut StreamRng,
) -> Trajectory {
    let dt = schedule.step;
    let sdt = sqrt(dt);
    let (mut x, mut y) = (settings.x0 as f64, settings.y0 as f64);
    let mut xs = Vec::with_capacity(schedule.n_obs);
    let mut ys = Vec::with_capacity(schedule.n_obs);
    xs.push(x);
    ys.push(y);
    let mut steps = 0u64;
    let mut diverged = false;
    'outer: for _ in 1..schedule.n_obs {
        for _ in 0..schedule.steps_per_obs {
            let h1 = (rates[0] * y).max(0.0);
            let h2 = (rates[1] * x * y).max(0.0);
            let h3 = (rates[2] * x).max(0.0);
            let mut dy = (h1 - h2) * dt;
            let mut dx = (h2 - h3) * dt;
            if noise {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let z3: f64 = rng.sample(StandardNormal);
                let (n1, n2, n3) = (sqrt(h1) * sdt * z1, sqrt(h2) * sdt * z2, sqrt(h3) * sdt * z3);
                dy += n1 - n2;
                dx += n2 - n3;
            }
            x += dx;
            y += dy;
            steps += 1;
            let blown = |v: f64| !v.is_finite() || v > DIVERGENCE_LIMIT;
            if blown(x) || blown(y) || (x < 0.0 && y < 0.0) {
                diverged = true;
                break 'outer;
            }
        }
        xs.push(x);
        ys.push(y);
    }
    Trajectory {
        times: settings.obs_times(),
        x: xs,
        y: ys,
        diverged,
        steps_used: steps,
    }
}

/// Mean, log variance, lag-1 and lag-2 autocorrelation of a series. Moments
/// use the 1/n convention. A series with zero variance has autocorrelations
/// 0 and log variance `ln(f64::MIN_POSITIVE)`.
pub fn series_statistics(z: &[f64]) -> [f64; 4] {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let acf = |lag: usize| {
        if var == 0.0 || lag >= z.len() {
            return 0.0;
        }
        let c: f64 = z.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum();
        c / n / var
    };
    [mean, ln(var.max(f64::MIN_POSITIVE)), acf(1), acf(2)]
}

/// Correlation between two series (1/n moments); 0 if either is constant.
pub fn cross_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let va = a.iter().map(|v| (v - ma) * (v - ma)).sum::<f64>() / n;
    let vb = b.iter().map(|v| (v - mb) * (v - mb)).sum::<f64>() / n;
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    let c = a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n;
    (c / sqrt(va * vb)).clamp(-1.0, 1.0)
}

/// The nine raw statistics: predator mean, log variance, two
/// autocorrelations; the same for prey; then their cross-correlation.
pub fn raw_statistics(x: &[f64], y: &[f64]) -> [f64; N_STATS] {
    let sx = series_statistics(x);
    let sy = series_statistics(y);
    [sx[0], sx[1], sx[2], sx[3], sy[0], sy[1], sy[2], sy[3], cross_correlation(x, y)]
}

/// Raw statistics of a trajectory, or `None` if it diverged.
pub fn trajectory_statistics(traj: &Trajectory) -> Option<[f64; N_STATS]> {
    if traj.diverged {
        return None;
    }
    let s = raw_statistics(&traj.x, &traj.y);
    s.iter().all(|v| v.is_finite()).then_some(s)
}

/// Statistics divided elementwise by `norm`.
pub fn summarize(raw: &[f64; N_STATS], norm: &[f64; N_STATS]) -> [f64; N_STATS] {
    core::array::from_fn(|k| raw[k] / norm[k])
}

/// Euclidean distance between normalized statistics; `+inf` unless `raw`
/// has all nine finite entries.
pub fn normalized_distance(raw: &[f64], observed: &[f64; N_STATS], norm: &[f64; N_STATS]) -> f64 {
    if raw.len() != N_STATS || raw.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let s: f64 = (0..N_STATS)
        .map(|k| {
            let d = (raw[k] - observed[k]) / norm[k];
            d * d
        })
        .sum();
    sqrt(s)
}

pub fn validate_norm(norm: &[f64; N_STATS]) -> Result<()> {
    if norm.iter().all(|&v| v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::config("norm_file", "scales must be positive and finite"))
    }
}

pub fn rates_from_log(theta: &[f64]) -> [f64; 3] {
    [exp(theta[0]), exp(theta[1]), exp(theta[2])]
}

fn in_prior_box(theta: &[f64]) -> bool {
    theta.iter().all(|&t| (LOG_PRIOR_LOW..=LOG_PRIOR_HIGH).contains(&t))
}

fn sample_prior_box(rng: &mut StreamRng) -> Vec<f64> {
    (0..3).map(|_| rng.random_range(LOG_PRIOR_LOW..LOG_PRIOR_HIGH)).collect()
}

pub const MIN_PILOT: usize = 100;
pub const MIN_PILOT_ALIVE: usize = 10;

/// Statistics of `n_pilot` prior-predictive simulations at the given step,
/// `None` where the run diverged. Draw `i` uses its own stream, so the result
/// does not depend on the executor.
pub fn pilot_statistics<E: Executor>(
    n_pilot: usize,
    settings: &LvSettings,
    schedule: &EmSchedule,
    seed: u64,
    exec: &E,
) -> Vec<Option<[f64; N_STATS]>> {
    exec.map(n_pilot, |i| {
        let mut rng = stream(seed, Purpose::Pilot, 0, i as u64);
        let theta = sample_prior_box(&mut rng);
        let traj = cle_euler_maruyama(rates_from_log(&theta), schedule, settings, true, &mut rng);
        trajectory_statistics(&traj)
    })
}

/// Per-statistic standard deviations over the non-diverged runs of
/// [`pilot_statistics`].
pub fn pilot_normalization<E: Executor>(
    n_pilot: usize,
    settings: &LvSettings,
    schedule: &EmSchedule,
    seed: u64,
    exec: &E,
) -> Result<[f64; N_STATS]> {
    if n_pilot < MIN_PILOT {
        return Err(Error::config("pilot_n", format!("must be at least {MIN_PILOT}")));
    }
    let stats: Vec<[f64; N_STATS]> = pilot_statistics(n_pilot, settings, schedule, seed, exec)
        .into_iter()
        .flatten()
        .collect();
    pilot_scales(&stats)
}

/// Sample standard deviation of each statistic.
pub fn pilot_scales(stats: &[[f64; N_STATS]]) -> Result<[f64; N_STATS]> {
    if stats.len() < MIN_PILOT_ALIVE {
        return Err(Error::DegeneratePilot(format!(
            "only {} pilot runs did not diverge (need {MIN_PILOT_ALIVE})",
            stats.len()
        )));
    }
    let n = stats.len() as f64;
    let mut out = [0.0; N_STATS];
    for k in 0..N_STATS {
        let mean = stats.iter().map(|s| s[k]).sum::<f64>() / n;
        let ss = stats.iter().map(|s| (s[k] - mean) * (s[k] - mean)).sum::<f64>();
        out[k] = sqrt(ss / (n - 1.0));
        if !(out[k] > 0.0 && out[k].is_finite()) {
            return Err(Error::DegeneratePilot(format!("statistic {k} has standard deviation {}", out[k])));
        }
    }
    Ok(out)
}

/// Euler-Maruyama pair: cheap and expensive runs at two step sizes.
#[derive(Debug, Clone)]
pub struct LotkaVolterra {
    settings: LvSettings,
    cheap: EmSchedule,
    expensive: EmSchedule,
    observed: [f64; N_STATS],
    norm: [f64; N_STATS],
}

impl LotkaVolterra {
    /// `observed` holds the raw statistics of the data.
    pub fn new(
        settings: LvSettings,
        step_cheap: f64,
        step_expensive: f64,
        observed: [f64; N_STATS],
        norm: [f64; N_STATS],
    ) -> Result<Self> {
        validate_norm(&norm)?;
        if observed.iter().any(|v| !v.is_finite()) {
            return Err(Error::Observation("observed statistics must be finite".into()));
        }
        Ok(Self {
            cheap: EmSchedule::new(step_cheap, &settings)?,
            expensive: EmSchedule::new(step_expensive, &settings)?,
            settings,
            observed,
            norm,
        })
    }

    /// Builds the model from observed series.
    pub fn from_data(
        settings: LvSettings,
        step_cheap: f64,
        step_expensive: f64,
        x: &[f64],
        y: &[f64],
        norm: [f64; N_STATS],
    ) -> Result<Self> {
        if x.len() != settings.n_obs() || y.len() != settings.n_obs() {
            return Err(Error::Observation(format!(
                "expected {} observations per series, got {} and {}",
                settings.n_obs(),
                x.len(),
                y.len()
            )));
        }
        Self::new(settings, step_cheap, step_expensive, raw_statistics(x, y), norm)
    }

    pub fn settings(&self) -> &LvSettings {
        &self.settings
    }

    pub fn observed(&self) -> &[f64; N_STATS] {
        &self.observed
    }

    pub fn norm(&self) -> &[f64; N_STATS] {
        &self.norm
    }

    fn run(&self, theta: &[f64], schedule: &EmSchedule, rng: &mut StreamRng) -> Draw {
        let traj = cle_euler_maruyama(rates_from_log(theta), schedule, &self.settings, true, rng);
        Draw {
            summary: trajectory_statistics(&traj).map(|s| s.to_vec()).unwrap_or_default(),
            cost: traj.steps_used,
        }
    }
}

impl SimulatorPair for LotkaVolterra {
    type State = ();

    fn dim(&self) -> usize {
        3
    }

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        sample_prior_box(rng)
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        if in_prior_box(theta) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn simulate_cheap(&self, theta: &[f64], rng: &mut StreamRng) -> CheapDraw<()> {
        let Draw { summary, cost } = self.run(theta, &self.cheap, rng);
        CheapDraw {
            summary,
            state: (),
            cost,
        }
    }

    fn simulate_expensive(&self, theta: &[f64], _state: &(), rng: &mut StreamRng) -> Draw {
        self.run(theta, &self.expensive, rng)
    }

    fn simulate_full(&self, theta: &[f64], rng: &mut StreamRng) -> Draw {
        self.run(theta, &self.expensive, rng)
    }

    fn distance1(&self, x1_summary: &[f64]) -> f64 {
        normalized_distance(x1_summary, &self.observed, &self.norm)
    }

    fn distance2(&self, x2_summary: &[f64]) -> f64 {
        normalized_distance(x2_summary, &self.observed, &self.norm)
    }
}
