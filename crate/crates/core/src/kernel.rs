//! MCMC moves on a single particle.
//!
//! Single-simulator ABC-SMC uses [`early_rejection_move`]: propose, run the
//! prior accept-reject test before simulating, then simulate and accept iff
//! the distance is within tolerance. Delayed acceptance splits the move into
//! stage 1a (the same prior test), stage 1b (cheap simulation, both the
//! current and proposed cheap distances within `eps1`) and stage 2 (expensive
//! simulation, proposed distance within `eps2`). The SMC driver runs the
//! stages in batch so that `eps1` can be chosen from all cheap distances;
//! [`delayed_acceptance_move`] chains them for one particle at fixed
//! tolerances.
//!
//! All random draws for one move come from one stream, in the order: proposal
//! normals, the stage-1a uniform, then whatever the simulators consume.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;
use crate::math::exp;
use crate::model::SimulatorPair;
use crate::particle::{within_tolerance, Particle};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Gaussian random-walk proposal `theta* ~ N(theta, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianProposal {
    chol: Matrix,
}

impl GaussianProposal {
    pub fn new(cov: &Matrix) -> Result<Self> {
        let chol = cov.cholesky().ok_or(Error::NoCovariance)?;
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }

    pub fn sample(&self, theta: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let step = self.chol.lower_mul(&z);
        theta.iter().zip(step).map(|(t, s)| t + s).collect()
    }

    /// `log q(from | to) - log q(to | from)`; zero for a symmetric walk.
    pub fn log_ratio(&self, _from: &[f64], _to: &[f64]) -> f64 {
        0.0
    }
}

/// Where a move ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveStage {
    Rejected1a,
    Rejected1b,
    Rejected2,
    Accepted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoveOutcome<S> {
    pub stage: MoveStage,
    pub proposed_theta: Option<Vec<f64>>,
    /// Replacement particle, present only when accepted.
    pub new_particle: Option<Particle<S>>,
    pub cheap_cost: u64,
    pub expensive_cost: u64,
}

impl<S> MoveOutcome<S> {
    pub fn cost(&self) -> u64 {
        self.cheap_cost + self.expensive_cost
    }

    pub fn accepted(&self) -> bool {
        self.stage == MoveStage::Accepted
    }

    /// The particle after the move: the replacement if accepted, else a copy
    /// of `current`.
    pub fn into_particle(self, current: &Particle<S>) -> Particle<S>
    where
        S: Clone,
    {
        self.new_particle.unwrap_or_else(|| current.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1a {
    pub theta_star: Vec<f64>,
    pub pass: bool,
}

/// Proposes `theta*` and accepts with probability
/// `min(1, p(theta*) q(theta | theta*) / (p(theta) q(theta* | theta)))`.
pub fn stage1a<M: SimulatorPair>(
    theta: &[f64],
    model: &M,
    proposal: &GaussianProposal,
    rng: &mut StreamRng,
) -> Stage1a {
    let theta_star = proposal.sample(theta, rng);
    let u: f64 = rng.random();
    Stage1a {
        pass: u < stage1a_probability(theta, &theta_star, model, proposal),
        theta_star,
    }
}

/// Stage-1a acceptance probability of moving from `theta` to `theta_star`.
pub fn stage1a_probability<M: SimulatorPair>(
    theta: &[f64],
    theta_star: &[f64],
    model: &M,
    proposal: &GaussianProposal,
) -> f64 {
    let log_ratio =
        model.prior_logpdf(theta_star) - model.prior_logpdf(theta) + proposal.log_ratio(theta, theta_star);
    if log_ratio >= 0.0 {
        1.0
    } else {
        exp(log_ratio)
    }
}

/// Cheap simulation at a proposed parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CheapProposal<S> {
    pub x1_summary: Vec<f64>,
    pub x1_state: S,
    pub d1: f64,
    pub cost: u64,
}

pub fn simulate_cheap_proposal<M: SimulatorPair>(
    theta_star: &[f64],
    model: &M,
    rng: &mut StreamRng,
) -> CheapProposal<M::State> {
    let draw = model.simulate_cheap(theta_star, rng);
    let d1 = sanitize(model.distance1(&draw.summary));
    CheapProposal {
        d1,
        x1_summary: draw.summary,
        x1_state: draw.state,
        cost: draw.cost,
    }
}

/// Stage-1b predicate: both the current and proposed cheap distances pass.
#[inline]
pub fn stage1b_passes(current_d1: f64, proposed_d1: f64, eps1: f64) -> bool {
    within_tolerance(current_d1, eps1) && within_tolerance(proposed_d1, eps1)
}

/// Stage 1b for one particle: cheap simulation, then the predicate.
pub fn stage1b<M: SimulatorPair>(
    particle: &Particle<M::State>,
    theta_star: &[f64],
    model: &M,
    eps1: f64,
    rng: &mut StreamRng,
) -> (CheapProposal<M::State>, bool) {
    let cheap = simulate_cheap_proposal(theta_star, model, rng);
    let pass = stage1b_passes(particle.d1, cheap.d1, eps1);
    (cheap, pass)
}

/// Stage 2: expensive simulation continuing from the cheap one; accept iff
/// the expensive distance passes `eps2`. On acceptance every simulated field
/// of the particle is replaced; the weight and id are kept, and the caller
/// assigns a fresh id.
pub fn stage2<M: SimulatorPair>(
    particle: &Particle<M::State>,
    theta_star: Vec<f64>,
    cheap: CheapProposal<M::State>,
    model: &M,
    eps2: f64,
    rng: &mut StreamRng,
) -> MoveOutcome<M::State> {
    let draw = model.simulate_expensive(&theta_star, &cheap.x1_state, rng);
    let d2 = sanitize(model.distance2(&draw.summary));
    if within_tolerance(d2, eps2) {
        MoveOutcome {
            stage: MoveStage::Accepted,
            proposed_theta: Some(theta_star.clone()),
            new_particle: Some(Particle {
                id: particle.id,
                theta: theta_star,
                x1_summary: cheap.x1_summary,
                x2_summary: draw.summary,
                x1_state: Some(cheap.x1_state),
                d1: cheap.d1,
                d2,
                weight: particle.weight,
            }),
            cheap_cost: cheap.cost,
            expensive_cost: draw.cost,
        }
    } else {
        MoveOutcome {
            stage: MoveStage::Rejected2,
            proposed_theta: Some(theta_star),
            new_particle: None,
            cheap_cost: cheap.cost,
            expensive_cost: draw.cost,
        }
    }
}

/// One delayed-acceptance move at fixed tolerances.
pub fn delayed_acceptance_move<M: SimulatorPair>(
    particle: &Particle<M::State>,
    model: &M,
    proposal: &GaussianProposal,
    eps1: f64,
    eps2: f64,
    rng: &mut StreamRng,
) -> MoveOutcome<M::State> {
    let s1a = stage1a(&particle.theta, model, proposal, rng);
    if !s1a.pass {
        return rejected_1a(s1a.theta_star);
    }
    let (cheap, pass) = stage1b(particle, &s1a.theta_star, model, eps1, rng);
    if !pass {
        return MoveOutcome {
            stage: MoveStage::Rejected1b,
            proposed_theta: Some(s1a.theta_star),
            new_particle: None,
            cheap_cost: cheap.cost,
            expensive_cost: 0,
        };
    }
    stage2(particle, s1a.theta_star, cheap, model, eps2, rng)
}

/// ABC-MCMC move with early rejection, using the model's full simulator.
/// The cheap simulator is never called. Accepted particles carry the full
/// simulation in `x2_summary`/`d2`; the cheap fields are left empty.
pub fn early_rejection_move<M: SimulatorPair>(
    particle: &Particle<M::State>,
    model: &M,
    proposal: &GaussianProposal,
    eps: f64,
    rng: &mut StreamRng,
) -> MoveOutcome<M::State> {
    let s1a = stage1a(&particle.theta, model, proposal, rng);
    if !s1a.pass {
        return rejected_1a(s1a.theta_star);
    }
    let draw = model.simulate_full(&s1a.theta_star, rng);
    let d2 = sanitize(model.distance2(&draw.summary));
    let accepted = within_tolerance(d2, eps);
    MoveOutcome {
        stage: if accepted {
            MoveStage::Accepted
        } else {
            MoveStage::Rejected2
        },
        new_particle: accepted.then(|| Particle {
            id: particle.id,
            theta: s1a.theta_star.clone(),
            x1_summary: Vec::new(),
            x2_summary: draw.summary,
            x1_state: None,
            d1: f64::INFINITY,
            d2,
            weight: particle.weight,
        }),
        proposed_theta: Some(s1a.theta_star),
        cheap_cost: 0,
        expensive_cost: draw.cost,
    }
}

fn rejected_1a<S>(theta_star: Vec<f64>) -> MoveOutcome<S> {
    MoveOutcome {
        stage: MoveStage::Rejected1a,
        proposed_theta: Some(theta_star),
        new_particle: None,
        cheap_cost: 0,
        expensive_cost: 0,
    }
}

// NaN distances are treated as failed simulations.
#[inline]
pub(crate) fn sanitize(d: f64) -> f64 {
    if d.is_nan() {
        f64::INFINITY
    } else {
        d
    }
}
