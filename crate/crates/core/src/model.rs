//! The simulator-pair contract implemented by every model.

use alloc::vec::Vec;

use crate::rng::StreamRng;

/// Output of a cheap simulation: summary, continuation state and cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CheapDraw<S> {
    pub summary: Vec<f64>,
    pub state: S,
    pub cost: u64,
}

/// Output of an expensive or full simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub summary: Vec<f64>,
    pub cost: u64,
}

/// A model with a prior, a cheap simulator `l1`, an expensive simulator `l2`
/// that may continue from the cheap one's internal state, and distances of
/// each simulator's summaries to the (embedded) observed summaries.
///
/// Parameters are whatever space the model's proposal acts on; models with
/// log-uniform priors work in log space.
///
/// Costs are in model units. `simulate_full` is the model's standalone
/// simulator as used by single-simulator ABC-SMC; for continuation models it
/// is the composition of the cheap and expensive simulators.
///
/// A failed or diverged simulation is reported through its summary: the
/// distance functions must return `+inf` for it.
pub trait SimulatorPair: Sync {
    type State: Clone + Send + Sync;

    fn dim(&self) -> usize;

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64>;

    /// Log prior density up to a constant; `-inf` outside the support.
    fn prior_logpdf(&self, theta: &[f64]) -> f64;

    fn simulate_cheap(&self, theta: &[f64], rng: &mut StreamRng) -> CheapDraw<Self::State>;

    /// Runs `l2(. | theta, x1)`. Models without continuation ignore `state`.
    fn simulate_expensive(&self, theta: &[f64], state: &Self::State, rng: &mut StreamRng) -> Draw;

    fn simulate_full(&self, theta: &[f64], rng: &mut StreamRng) -> Draw;

    fn distance1(&self, x1_summary: &[f64]) -> f64;

    fn distance2(&self, x2_summary: &[f64]) -> f64;
}

/// Turns a model into a pair whose cheap simulator is the model's full
/// simulator and whose expensive simulator replays that result at zero cost.
///
/// Delayed acceptance with this pair, `A = N`, performs exactly the same
/// random draws and accept decisions as single-simulator ABC-SMC on the
/// wrapped model, which makes it an exact reduction oracle.
#[derive(Debug, Clone)]
pub struct Collapsed<M>(pub M);

impl<M: SimulatorPair> SimulatorPair for Collapsed<M> {
    type State = Vec<f64>;

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        self.0.prior_sample(rng)
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        self.0.prior_logpdf(theta)
    }

    fn simulate_cheap(&self, theta: &[f64], rng: &mut StreamRng) -> CheapDraw<Vec<f64>> {
        let Draw { summary, cost } = self.0.simulate_full(theta, rng);
        CheapDraw {
            state: summary.clone(),
            summary,
            cost,
        }
    }

    fn simulate_expensive(&self, _theta: &[f64], state: &Vec<f64>, _rng: &mut StreamRng) -> Draw {
        Draw {
            summary: state.clone(),
            cost: 0,
        }
    }

    fn simulate_full(&self, theta: &[f64], rng: &mut StreamRng) -> Draw {
        self.0.simulate_full(theta, rng)
    }

    fn distance1(&self, x1_summary: &[f64]) -> f64 {
        self.0.distance2(x1_summary)
    }

    fn distance2(&self, x2_summary: &[f64]) -> f64 {
        self.0.distance2(x2_summary)
    }
}
