//! The two SMC drivers: ABC-SMC with early rejection, and delayed-acceptance
//! ABC-SMC.
//!
//! Each iteration draws the stratified uniforms `v`, picks the next
//! tolerance so that `U` particles stay unique after reweighting and
//! resampling with that same `v`, reweights by the indicator kernel,
//! resamples, rebuilds the proposal covariance from the resampled cloud and
//! moves every particle once.
//!
//! Per-particle work is handed to an [`Executor`]. Every particle draws from
//! its own stream keyed by `(seed, iteration, index)`, so results are
//! identical for any executor.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::adapt::{choose_eps1, choose_eps2, CovarianceTracker, Eps2Choice};
use crate::kernel::{
    early_rejection_move, simulate_cheap_proposal, stage1a, stage1b_passes, stage2, CheapProposal,
    GaussianProposal,
};
use crate::model::SimulatorPair;
use crate::particle::{normalize, particle_id, CostMeter, Particle, Population, RunStatus, RunTrace, Stage, TraceRow};
use crate::resample::{count_unique_ids, ess, reweight, stratified_resample};
use crate::rng::{stream, Purpose, StreamRng};
use crate::{Error, Result};

/// Runs `f(0..n)` and returns the results in index order.
pub trait Executor: Sync {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    AbcSmc,
    DaAbcSmc,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::AbcSmc => "abc_smc",
            Algorithm::DaAbcSmc => "da_abc_smc",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "abc_smc" => Some(Algorithm::AbcSmc),
            "da_abc_smc" => Some(Algorithm::DaAbcSmc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub algorithm: Algorithm,
    /// N
    pub n_particles: usize,
    /// A: expensive simulations per iteration (delayed acceptance only).
    pub n_stage2: usize,
    /// U: unique particles kept after each resampling.
    pub n_unique: usize,
    pub eps1_start: f64,
    pub eps2_start: f64,
    pub eps2_end: f64,
    pub cost_budget: Option<u64>,
    pub seed: u64,
    /// Multiplier on the particle covariance used as proposal covariance.
    pub proposal_scale: f64,
    /// Consecutive iterations without an accepted move before giving up.
    pub stall_limit: usize,
}

impl EngineConfig {
    pub fn new(algorithm: Algorithm, n_particles: usize, n_stage2: usize, n_unique: usize) -> Self {
        Self {
            algorithm,
            n_particles,
            n_stage2,
            n_unique,
            eps1_start: f64::INFINITY,
            eps2_start: f64::INFINITY,
            eps2_end: 0.0,
            cost_budget: None,
            seed: 0,
            proposal_scale: 1.0,
            stall_limit: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, a, u) = (self.n_particles, self.n_stage2, self.n_unique);
        if n == 0 {
            return Err(Error::config("N", "must be positive"));
        }
        if u == 0 {
            return Err(Error::config("U", "must be positive"));
        }
        match self.algorithm {
            Algorithm::AbcSmc => {
                if u >= n {
                    return Err(Error::config("U", "must be less than N"));
                }
            }
            Algorithm::DaAbcSmc => {
                if a < u {
                    return Err(Error::config("A", "must be at least U"));
                }
                if a > n {
                    return Err(Error::config("A", "must not exceed N"));
                }
                if n % a != 0 {
                    return Err(Error::config("A", "must divide N"));
                }
            }
        }
        if !(self.eps2_end >= 0.0) {
            return Err(Error::config("eps2_end", "must be nonnegative"));
        }
        if !(self.eps2_start >= self.eps2_end) {
            return Err(Error::config("eps2_start", "must be at least eps2_end"));
        }
        if !(self.eps1_start >= 0.0) {
            return Err(Error::config("eps1_start", "must be nonnegative"));
        }
        if !(self.proposal_scale > 0.0) || !self.proposal_scale.is_finite() {
            return Err(Error::config("proposal_scale", "must be positive and finite"));
        }
        if n >= 1 << 32 {
            return Err(Error::config("N", "too large"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput<S> {
    pub population: Population<S>,
    pub trace: RunTrace,
    pub cost: CostMeter,
}

/// Draws `(theta, x1, x2)` for `A` particles and repeats each `N / A` times.
/// Costs `A` cheap and `A` expensive simulations.
pub fn init_da<M: SimulatorPair, E: Executor>(
    config: &EngineConfig,
    model: &M,
    exec: &E,
) -> Result<(Population<M::State>, CostMeter)> {
    let (n, a) = (config.n_particles, config.n_stage2);
    let draws = exec.map(a, |i| {
        let mut rng = stream(config.seed, Purpose::Init, 0, i as u64);
        let theta = model.prior_sample(&mut rng);
        let cheap = simulate_cheap_proposal(&theta, model, &mut rng);
        let x2 = model.simulate_expensive(&theta, &cheap.x1_state, &mut rng);
        let d2 = crate::kernel::sanitize(model.distance2(&x2.summary));
        let cost = cheap.cost + x2.cost;
        let particle = Particle {
            id: particle_id(0, i),
            theta,
            x1_summary: cheap.x1_summary,
            x2_summary: x2.summary,
            x1_state: Some(cheap.x1_state),
            d1: cheap.d1,
            d2,
            weight: 1.0 / n as f64,
        };
        (particle, cost)
    });
    let mut cost = CostMeter::new();
    let mut particles = Vec::with_capacity(n);
    for (particle, c) in draws {
        cost.add(Stage::Init, c);
        for _ in 0..n / a {
            particles.push(particle.clone());
        }
    }
    Ok((
        Population {
            particles,
            eps1: config.eps1_start,
            eps2: config.eps2_start,
            t: 0,
        },
        cost,
    ))
}

/// `N` independent draws from the prior and the full simulator.
pub fn init_abc<M: SimulatorPair, E: Executor>(
    config: &EngineConfig,
    model: &M,
    exec: &E,
) -> Result<(Population<M::State>, CostMeter)> {
    let n = config.n_particles;
    let draws = exec.map(n, |i| {
        let mut rng = stream(config.seed, Purpose::Init, 0, i as u64);
        let theta = model.prior_sample(&mut rng);
        let x = model.simulate_full(&theta, &mut rng);
        let d2 = crate::kernel::sanitize(model.distance2(&x.summary));
        let particle = Particle {
            id: particle_id(0, i),
            theta,
            x1_summary: Vec::new(),
            x2_summary: x.summary,
            x1_state: None,
            d1: f64::INFINITY,
            d2,
            weight: 1.0 / n as f64,
        };
        (particle, x.cost)
    });
    let mut cost = CostMeter::new();
    let particles = draws
        .into_iter()
        .map(|(p, c)| {
            cost.add(Stage::Init, c);
            p
        })
        .collect();
    Ok((
        Population {
            particles,
            eps1: f64::INFINITY,
            eps2: config.eps2_start,
            t: 0,
        },
        cost,
    ))
}

/// Iteration-by-iteration driver for either algorithm.
pub struct Sampler<'a, M: SimulatorPair, E: Executor> {
    config: EngineConfig,
    model: &'a M,
    exec: &'a E,
    population: Population<M::State>,
    trace: RunTrace,
    cost: CostMeter,
    covariance: CovarianceTracker,
    zero_accept_streak: usize,
    last_stage1: Option<Stage1Record>,
    last_eps2: Option<Eps2Choice>,
}

/// Stage-1 bookkeeping of the latest delayed-acceptance iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Record {
    /// `max(d1_current, d1_proposed)` per particle; `+inf` where stage 1a
    /// rejected.
    pub pair_max: Vec<f64>,
    pub eps1: f64,
    pub n_stage1a_pass: usize,
    pub n_stage1_pass: usize,
    pub cheap_cost: u64,
    pub expensive_cost: u64,
    pub expensive_runs: usize,
}

struct MoveStats {
    eps1: f64,
    n_stage1_pass: usize,
    n_accept: usize,
}

impl<'a, M: SimulatorPair, E: Executor> Sampler<'a, M, E> {
    /// Validates the configuration and draws the initial population.
    pub fn new(config: EngineConfig, model: &'a M, exec: &'a E) -> Result<Self> {
        config.validate()?;
        let (population, cost) = match config.algorithm {
            Algorithm::AbcSmc => init_abc(&config, model, exec)?,
            Algorithm::DaAbcSmc => init_da(&config, model, exec)?,
        };
        let n_unique = match config.algorithm {
            Algorithm::AbcSmc => config.n_particles,
            Algorithm::DaAbcSmc => config.n_stage2,
        };
        let mut trace = RunTrace::new(config.n_particles);
        trace.rows.push(TraceRow {
            t: 0,
            eps1: population.eps1,
            eps2: population.eps2,
            cumulative_cost: cost.total(),
            n_stage1_pass: 0,
            n_stage2_accept: 0,
            n_unique,
            ess: config.n_particles as f64,
        });
        let mut sampler = Self {
            config,
            model,
            exec,
            population,
            trace,
            cost,
            covariance: CovarianceTracker::new(),
            zero_accept_streak: 0,
            last_stage1: None,
            last_eps2: None,
        };
        sampler.update_status();
        Ok(sampler)
    }

    /// Continues a run from a saved population, trace and cost meter. The
    /// covariance fallback starts empty.
    pub fn resume(
        config: EngineConfig,
        model: &'a M,
        exec: &'a E,
        population: Population<M::State>,
        mut trace: RunTrace,
        cost: CostMeter,
    ) -> Result<Self> {
        config.validate()?;
        if population.len() != config.n_particles || trace.n_particles != config.n_particles {
            return Err(Error::LengthMismatch {
                expected: config.n_particles,
                got: population.len(),
            });
        }
        let zero_accept_streak = trace
            .rows
            .iter()
            .skip(1)
            .rev()
            .take_while(|r| r.n_stage2_accept == 0)
            .count();
        trace.status = RunStatus::Running;
        let mut sampler = Self {
            config,
            model,
            exec,
            population,
            trace,
            cost,
            covariance: CovarianceTracker::new(),
            zero_accept_streak,
            last_stage1: None,
            last_eps2: None,
        };
        sampler.update_status();
        Ok(sampler)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn population(&self) -> &Population<M::State> {
        &self.population
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn cost(&self) -> &CostMeter {
        &self.cost
    }

    pub fn status(&self) -> RunStatus {
        self.trace.status
    }

    pub fn last_stage1(&self) -> Option<&Stage1Record> {
        self.last_stage1.as_ref()
    }

    /// Tolerance search of the latest iteration.
    pub fn last_eps2_choice(&self) -> Option<&Eps2Choice> {
        self.last_eps2.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.trace.status != RunStatus::Running
    }

    fn update_status(&mut self) {
        let c = &self.config;
        self.trace.status = if self.population.eps2 <= c.eps2_end {
            RunStatus::Finished
        } else if c.cost_budget.is_some_and(|b| self.cost.total() >= b) {
            RunStatus::BudgetExhausted
        } else if c.stall_limit > 0 && self.zero_accept_streak >= c.stall_limit {
            RunStatus::Stalled
        } else {
            RunStatus::Running
        };
    }

    /// Runs one SMC iteration. Returns `None` once the run has stopped.
    pub fn step(&mut self) -> Result<Option<TraceRow>> {
        if self.is_done() {
            return Ok(None);
        }
        let n = self.config.n_particles;
        let t_next = self.population.t + 1;

        let mut vrng = stream(self.config.seed, Purpose::Resample, t_next as u64, 0);
        let v: Vec<f64> = (0..n).map(|_| vrng.random::<f64>()).collect();

        // If no tolerance keeps U distinct particles the previous one is
        // kept; the move step then creates new particles.
        let choice = choose_eps2(&self.population, &v, self.config.n_unique, self.config.eps2_end)?;
        self.last_eps2 = Some(choice);
        let eps2 = choice.eps;
        let mut weights = reweight(&self.population.d2_values(), &self.population.weights(), eps2);
        normalize(&mut weights)?;
        let ess_value = ess(&weights)?;
        let indices = stratified_resample(&weights, &v)?;
        let n_unique = count_unique_ids(&indices, &self.population.ids());
        debug_assert_eq!(n_unique, choice.n_unique);

        let uniform = 1.0 / n as f64;
        let particles: Vec<Particle<M::State>> = indices
            .iter()
            .map(|&i| {
                let mut p = self.population.particles[i].clone();
                p.weight = uniform;
                p
            })
            .collect();

        let thetas: Vec<Vec<f64>> = particles.iter().map(|p| p.theta.clone()).collect();
        let cov = self.covariance.update(&thetas, &vec![uniform; n])?;
        let proposal = GaussianProposal::new(&cov.scaled(self.config.proposal_scale))?;

        let (particles, stats) = match self.config.algorithm {
            Algorithm::AbcSmc => self.move_abc(particles, &proposal, eps2, t_next),
            Algorithm::DaAbcSmc => self.move_da(particles, &proposal, eps2, t_next)?,
        };

        self.population = Population {
            particles,
            eps1: stats.eps1,
            eps2,
            t: t_next,
        };
        let row = TraceRow {
            t: t_next,
            eps1: stats.eps1,
            eps2,
            cumulative_cost: self.cost.total(),
            n_stage1_pass: stats.n_stage1_pass,
            n_stage2_accept: stats.n_accept,
            n_unique,
            ess: ess_value,
        };
        self.trace.rows.push(row);
        if stats.n_accept == 0 {
            self.zero_accept_streak += 1;
        } else {
            self.zero_accept_streak = 0;
        }
        self.update_status();
        Ok(Some(row))
    }

    fn move_abc(
        &mut self,
        particles: Vec<Particle<M::State>>,
        proposal: &GaussianProposal,
        eps2: f64,
        t: usize,
    ) -> (Vec<Particle<M::State>>, MoveStats) {
        let (seed, model) = (self.config.seed, self.model);
        let outcomes = self.exec.map(particles.len(), |i| {
            let mut rng = stream(seed, Purpose::Move, t as u64, i as u64);
            early_rejection_move(&particles[i], model, proposal, eps2, &mut rng)
        });
        let mut n_stage1_pass = 0;
        let mut n_accept = 0;
        let mut moved = Vec::with_capacity(particles.len());
        for (i, (p, o)) in particles.into_iter().zip(outcomes).enumerate() {
            if o.stage != crate::kernel::MoveStage::Rejected1a {
                n_stage1_pass += 1;
            }
            self.cost.add(Stage::Expensive, o.expensive_cost);
            match o.new_particle {
                Some(mut new) => {
                    n_accept += 1;
                    new.id = particle_id(t, i);
                    moved.push(new);
                }
                None => moved.push(p),
            }
        }
        let stats = MoveStats {
            eps1: f64::INFINITY,
            n_stage1_pass,
            n_accept,
        };
        (moved, stats)
    }

    fn move_da(
        &mut self,
        particles: Vec<Particle<M::State>>,
        proposal: &GaussianProposal,
        eps2: f64,
        t: usize,
    ) -> Result<(Vec<Particle<M::State>>, MoveStats)> {
        let (seed, model) = (self.config.seed, self.model);
        type FirstStage<S> = (Vec<f64>, Option<CheapProposal<S>>, StreamRng);
        let first: Vec<FirstStage<M::State>> = self.exec.map(particles.len(), |i| {
            let mut rng = stream(seed, Purpose::Move, t as u64, i as u64);
            let s1a = stage1a(&particles[i].theta, model, proposal, &mut rng);
            let cheap = s1a
                .pass
                .then(|| simulate_cheap_proposal(&s1a.theta_star, model, &mut rng));
            (s1a.theta_star, cheap, rng)
        });

        let d1_current: Vec<f64> = particles.iter().map(|p| p.d1).collect();
        let d1_proposed: Vec<f64> = first
            .iter()
            .map(|(_, c, _)| c.as_ref().map_or(f64::INFINITY, |c| c.d1))
            .collect();
        let eps1 = choose_eps1(&d1_current, &d1_proposed, self.config.n_stage2)?;
        let cheap_cost: u64 = first.iter().filter_map(|(_, c, _)| c.as_ref().map(|c| c.cost)).sum();
        self.cost.add(Stage::Cheap, cheap_cost);
        let passed: Vec<usize> = (0..particles.len())
            .filter(|&i| first[i].1.is_some() && stage1b_passes(d1_current[i], d1_proposed[i], eps1))
            .collect();

        let outcomes = self.exec.map(passed.len(), |k| {
            let i = passed[k];
            let (theta_star, cheap, rng) = &first[i];
            let mut rng = rng.clone();
            let cheap = cheap.clone().expect("stage-1 pass implies a cheap simulation");
            stage2(&particles[i], theta_star.clone(), cheap, model, eps2, &mut rng)
        });

        let mut moved = particles;
        let mut n_accept = 0;
        let mut expensive_cost = 0;
        let expensive_runs = outcomes.len();
        for (&i, o) in passed.iter().zip(outcomes) {
            expensive_cost += o.expensive_cost;
            if let Some(mut new) = o.new_particle {
                n_accept += 1;
                new.id = particle_id(t, i);
                moved[i] = new;
            }
        }
        self.cost.add(Stage::Expensive, expensive_cost);
        self.last_stage1 = Some(Stage1Record {
            pair_max: d1_current
                .iter()
                .zip(&d1_proposed)
                .map(|(&a, &b)| if a.is_nan() || b.is_nan() { f64::INFINITY } else { a.max(b) })
                .collect(),
            eps1,
            n_stage1a_pass: first.iter().filter(|f| f.1.is_some()).count(),
            n_stage1_pass: passed.len(),
            cheap_cost,
            expensive_cost,
            expensive_runs,
        });
        let stats = MoveStats {
            eps1,
            n_stage1_pass: passed.len(),
            n_accept,
        };
        Ok((moved, stats))
    }

    /// Runs to completion, calling `on_row` with every new trace row.
    pub fn run(mut self, mut on_row: impl FnMut(&TraceRow)) -> Result<RunOutput<M::State>> {
        while let Some(row) = self.step()? {
            on_row(&row);
        }
        Ok(self.into_output())
    }

    pub fn into_output(self) -> RunOutput<M::State> {
        RunOutput {
            population: self.population,
            trace: self.trace,
            cost: self.cost,
        }
    }
}

/// Algorithm 1: ABC-SMC with early rejection using the model's full
/// simulator.
pub fn run_abc_smc<M: SimulatorPair, E: Executor>(
    config: &EngineConfig,
    model: &M,
    exec: &E,
) -> Result<RunOutput<M::State>> {
    if config.algorithm != Algorithm::AbcSmc {
        return Err(Error::config("algorithm", "expected abc_smc"));
    }
    Sampler::new(config.clone(), model, exec)?.run(|_| {})
}

/// Algorithm 2: delayed-acceptance ABC-SMC.
pub fn run_da_abc_smc<M: SimulatorPair, E: Executor>(
    config: &EngineConfig,
    model: &M,
    exec: &E,
) -> Result<RunOutput<M::State>> {
    if config.algorithm != Algorithm::DaAbcSmc {
        return Err(Error::config("algorithm", "expected da_abc_smc"));
    }
    Sampler::new(config.clone(), model, exec)?.run(|_| {})
}

/// SMC estimate of the normalising constant for the final tolerance,
/// without the marginal-likelihood correction term: the product over
/// iterations of the weight mass surviving reweighting. Weights are uniform
/// before every reweighting, so each factor is `ess / N`.
pub fn normalising_constant_estimate(trace: &RunTrace) -> f64 {
    let n = trace.n_particles as f64;
    trace.rows.iter().skip(1).map(|r| r.ess / n).product()
}
