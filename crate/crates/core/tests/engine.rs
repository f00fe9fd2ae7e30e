use dasmc_core::engine::{
    init_da, normalising_constant_estimate, run_abc_smc, run_da_abc_smc, Algorithm, EngineConfig, Executor,
    Sampler, Sequential,
};
use dasmc_core::model::{CheapDraw, Collapsed, Draw, SimulatorPair};
use dasmc_core::models::gaussian::{GaussianToy, GaussianToyConfig};
use dasmc_core::models::ising::{generate, IsingConfig, LatentIsing, Scan};
use dasmc_core::particle::{RunStatus, Stage};
use dasmc_core::rng::{stream, Purpose, StreamRng};
use dasmc_core::{within_tolerance, Error};
use rand::Rng;

/// Evaluates indices back to front, to show results do not depend on
/// evaluation order.
struct Reversed;

impl Executor for Reversed {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let mut out: Vec<R> = (0..n).rev().map(f).collect();
        out.reverse();
        out
    }
}

fn toy(cheap_sd: f64) -> GaussianToy {
    GaussianToy::new(GaussianToyConfig {
        y_obs: 0.7,
        cheap_noise_sd: cheap_sd,
        ..GaussianToyConfig::default()
    })
    .unwrap()
}

fn config(algorithm: Algorithm, n: usize, a: usize, u: usize, end: f64, seed: u64) -> EngineConfig {
    EngineConfig {
        eps2_end: end,
        seed,
        ..EngineConfig::new(algorithm, n, a, u)
    }
}

#[test]
fn reduction_to_abc_smc_gaussian() {
    let model = toy(1.0);
    let abc = run_abc_smc(&config(Algorithm::AbcSmc, 400, 0, 200, 0.1, 11), &model, &Sequential).unwrap();
    let da = run_da_abc_smc(&config(Algorithm::DaAbcSmc, 400, 400, 200, 0.1, 11), &Collapsed(model), &Sequential)
        .unwrap();
    assert!(abc.trace.rows.len() > 3);
    assert_eq!(abc.trace, da.trace);
    let thetas = |p: &[Vec<f64>]| p.to_vec();
    assert_eq!(
        thetas(&abc.population.particles.iter().map(|p| p.theta.clone()).collect::<Vec<_>>()),
        da.population.particles.iter().map(|p| p.theta.clone()).collect::<Vec<_>>()
    );
}

#[test]
fn reduction_to_abc_smc_ising() {
    let mut rng = stream(3, Purpose::Data, 0, 0);
    let data = generate(5, 0.1, 0.1, 200, Scan::Raster, &mut rng);
    let model = LatentIsing::new(
        IsingConfig {
            side: 5,
            cheap_sweeps: 2,
            total_sweeps: 20,
            scan: Scan::Raster,
        },
        &data,
    )
    .unwrap();
    let budget = |cfg: EngineConfig| EngineConfig {
        cost_budget: Some(300_000),
        ..cfg
    };
    let abc = run_abc_smc(&budget(config(Algorithm::AbcSmc, 200, 0, 100, 0.0, 5)), &model, &Sequential).unwrap();
    let da = run_da_abc_smc(
        &budget(config(Algorithm::DaAbcSmc, 200, 200, 100, 0.0, 5)),
        &Collapsed(model),
        &Sequential,
    )
    .unwrap();
    assert!(abc.trace.rows.len() > 3);
    assert_eq!(abc.trace, da.trace);
}

#[test]
fn delayed_acceptance_invariants() {
    let model = toy(1.5);
    let cfg = config(Algorithm::DaAbcSmc, 600, 150, 100, 0.05, 21);
    let mut sampler = Sampler::new(cfg.clone(), &model, &Sequential).unwrap();
    let mut prev_eps2 = f64::INFINITY;
    let mut prev_expensive = sampler.cost().stage(Stage::Expensive);
    while let Some(row) = sampler.step().unwrap() {
        assert!(row.eps2 <= prev_eps2);
        prev_eps2 = row.eps2;
        if sampler.status() != RunStatus::Stalled {
            assert!(row.n_unique >= cfg.n_unique, "{row:?}");
        }
        for p in &sampler.population().particles {
            assert!(within_tolerance(p.d2, row.eps2));
        }

        let rec = sampler.last_stage1().unwrap();
        let expensive = sampler.cost().stage(Stage::Expensive);
        assert_eq!(expensive - prev_expensive, rec.expensive_runs as u64);
        assert_eq!(rec.expensive_runs, rec.n_stage1_pass);
        assert_eq!(rec.n_stage1_pass, row.n_stage1_pass);
        prev_expensive = expensive;

        let passing = rec.pair_max.iter().filter(|&&m| within_tolerance(m, rec.eps1)).count();
        assert_eq!(passing, rec.n_stage1_pass);
        let finite = rec.pair_max.iter().filter(|m| m.is_finite()).count();
        if finite < cfg.n_stage2 {
            assert_eq!(rec.eps1, f64::INFINITY);
        } else {
            assert!(rec.n_stage1_pass >= cfg.n_stage2);
            let jump = rec
                .pair_max
                .iter()
                .copied()
                .filter(|&m| within_tolerance(m, rec.eps1))
                .fold(f64::NEG_INFINITY, f64::max);
            let ties = rec.pair_max.iter().filter(|&&m| m == jump).count();
            assert!(rec.n_stage1_pass - cfg.n_stage2 < ties);
        }
    }
    assert_eq!(sampler.status(), RunStatus::Finished);
    assert!(prev_eps2 <= 0.05);
}

#[test]
fn results_do_not_depend_on_evaluation_order() {
    let model = toy(2.0);
    let cfg = config(Algorithm::DaAbcSmc, 300, 100, 60, 0.2, 8);
    let a = run_da_abc_smc(&cfg, &model, &Sequential).unwrap();
    let b = run_da_abc_smc(&cfg, &model, &Reversed).unwrap();
    assert_eq!(a, b);
    let cfg = config(Algorithm::AbcSmc, 300, 0, 150, 0.2, 8);
    assert_eq!(run_abc_smc(&cfg, &model, &Sequential).unwrap(), run_abc_smc(&cfg, &model, &Reversed).unwrap());
}

#[test]
fn seeds_change_results() {
    let model = toy(1.0);
    let a = run_abc_smc(&config(Algorithm::AbcSmc, 100, 0, 50, 0.3, 1), &model, &Sequential).unwrap();
    let b = run_abc_smc(&config(Algorithm::AbcSmc, 100, 0, 50, 0.3, 2), &model, &Sequential).unwrap();
    assert_ne!(a.trace, b.trace);
}

#[test]
fn initial_population_is_replicated() {
    let model = toy(1.0);
    let cfg = config(Algorithm::DaAbcSmc, 12, 4, 2, 0.1, 3);
    let (pop, cost) = init_da(&cfg, &model, &Sequential).unwrap();
    assert_eq!(pop.len(), 12);
    for block in pop.particles.chunks(3) {
        assert!(block.iter().all(|p| p == &block[0]));
        assert_eq!(block[0].weight, 1.0 / 12.0);
    }
    assert_ne!(pop.particles[0].theta, pop.particles[3].theta);
    assert_eq!(cost.stage(Stage::Init), 8);
    assert_eq!(pop.eps1, f64::INFINITY);
    assert_eq!(pop.eps2, f64::INFINITY);

    let s = Sampler::new(cfg, &model, &Sequential).unwrap();
    let row = s.trace().rows[0];
    assert_eq!((row.t, row.n_unique, row.cumulative_cost), (0, 4, 8));
}

#[test]
fn budget_stops_the_run() {
    let model = toy(1.0);
    let cfg = EngineConfig {
        cost_budget: Some(3000),
        ..config(Algorithm::AbcSmc, 500, 0, 250, 0.0, 4)
    };
    let out = run_abc_smc(&cfg, &model, &Sequential).unwrap();
    assert_eq!(out.trace.status, RunStatus::BudgetExhausted);
    let rows = &out.trace.rows;
    let last = rows[rows.len() - 1];
    assert!(last.cumulative_cost >= 3000);
    assert!(rows[rows.len() - 2].cumulative_cost < 3000);
    assert!(last.cumulative_cost - rows[rows.len() - 2].cumulative_cost <= 500);
    assert_eq!(out.cost.total(), last.cumulative_cost);
}

#[test]
fn start_at_final_tolerance_runs_no_iterations() {
    let model = toy(1.0);
    let cfg = EngineConfig {
        eps2_start: 0.5,
        ..config(Algorithm::AbcSmc, 50, 0, 25, 0.5, 4)
    };
    let out = run_abc_smc(&cfg, &model, &Sequential).unwrap();
    assert_eq!(out.trace.rows.len(), 1);
    assert_eq!(out.trace.status, RunStatus::Finished);
}

/// Prior supported on a handful of points, so every continuous proposal is
/// rejected before simulation.
struct Lattice;

impl SimulatorPair for Lattice {
    type State = ();

    fn dim(&self) -> usize {
        1
    }

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        vec![rng.random_range(0..8) as f64]
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        if theta[0].fract() == 0.0 && (0.0..8.0).contains(&theta[0]) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn simulate_cheap(&self, theta: &[f64], rng: &mut StreamRng) -> CheapDraw<()> {
        let d = self.simulate_full(theta, rng);
        CheapDraw {
            summary: d.summary,
            state: (),
            cost: d.cost,
        }
    }

    fn simulate_expensive(&self, theta: &[f64], _: &(), rng: &mut StreamRng) -> Draw {
        self.simulate_full(theta, rng)
    }

    fn simulate_full(&self, _theta: &[f64], rng: &mut StreamRng) -> Draw {
        Draw {
            summary: vec![rng.random::<f64>()],
            cost: 1,
        }
    }

    fn distance1(&self, x: &[f64]) -> f64 {
        x[0]
    }

    fn distance2(&self, x: &[f64]) -> f64 {
        x[0]
    }
}

#[test]
fn stalls_after_repeated_zero_acceptance() {
    for algorithm in [Algorithm::AbcSmc, Algorithm::DaAbcSmc] {
        let cfg = EngineConfig {
            stall_limit: 3,
            ..config(algorithm, 64, 32, 16, 0.0, 9)
        };
        let out = Sampler::new(cfg, &Lattice, &Sequential).unwrap().run(|_| {}).unwrap();
        assert_eq!(out.trace.status, RunStatus::Stalled);
        assert_eq!(out.trace.rows.len(), 4);
        assert!(out.trace.rows[1..].iter().all(|r| r.n_stage2_accept == 0));
    }
}

/// Gaussian toy whose simulations fail (infinite distance) for negative
/// parameters.
struct FailsBelowZero(GaussianToy);

impl SimulatorPair for FailsBelowZero {
    type State = ();

    fn dim(&self) -> usize {
        1
    }

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        self.0.prior_sample(rng)
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        self.0.prior_logpdf(theta)
    }

    fn simulate_cheap(&self, theta: &[f64], rng: &mut StreamRng) -> CheapDraw<()> {
        let d = self.simulate_full(theta, rng);
        CheapDraw {
            summary: d.summary,
            state: (),
            cost: d.cost,
        }
    }

    fn simulate_expensive(&self, theta: &[f64], _: &(), rng: &mut StreamRng) -> Draw {
        self.simulate_full(theta, rng)
    }

    fn simulate_full(&self, theta: &[f64], rng: &mut StreamRng) -> Draw {
        let mut d = self.0.simulate_full(theta, rng);
        if theta[0] < 0.0 {
            d.summary.clear();
        }
        d
    }

    fn distance1(&self, x: &[f64]) -> f64 {
        self.0.distance1(x)
    }

    fn distance2(&self, x: &[f64]) -> f64 {
        self.0.distance2(x)
    }
}

#[test]
fn unreachable_unique_target_keeps_tolerance_and_moves_on() {
    // U = A: with failed initial draws the first iteration cannot keep U
    // distinct particles, so it keeps eps2 = inf and moves.
    let model = FailsBelowZero(toy(1.5));
    let cfg = config(Algorithm::DaAbcSmc, 400, 40, 40, 0.3, 2);
    let mut sampler = Sampler::new(cfg.clone(), &model, &Sequential).unwrap();
    let row = sampler.step().unwrap().unwrap();
    let choice = *sampler.last_eps2_choice().unwrap();
    assert!(choice.stalled);
    assert_eq!(row.eps2, f64::INFINITY);
    assert!(row.n_unique < 40);
    assert!(row.n_stage2_accept > 0);
    let out = sampler.run(|_| {}).unwrap();
    assert_eq!(out.trace.status, RunStatus::Finished);
    assert!(out.trace.rows[2..].iter().all(|r| r.n_unique >= 40));
}

#[test]
fn configuration_errors_name_the_key() {
    let model = toy(1.0);
    let key = |cfg: EngineConfig| match Sampler::new(cfg, &model, &Sequential) {
        Err(Error::Config { key, .. }) => key,
        other => panic!("expected a config error, got {:?}", other.map(|_| ())),
    };
    assert_eq!(key(config(Algorithm::DaAbcSmc, 100, 0, 10, 0.1, 0)), "A");
    assert_eq!(key(config(Algorithm::DaAbcSmc, 100, 30, 10, 0.1, 0)), "A");
    assert_eq!(key(config(Algorithm::DaAbcSmc, 100, 20, 30, 0.1, 0)), "A");
    assert_eq!(key(config(Algorithm::AbcSmc, 100, 0, 100, 0.1, 0)), "U");
    assert_eq!(key(config(Algorithm::AbcSmc, 100, 0, 0, 0.1, 0)), "U");
    assert_eq!(key(config(Algorithm::AbcSmc, 0, 0, 0, 0.1, 0)), "N");
    assert_eq!(key(config(Algorithm::AbcSmc, 10, 0, 5, -1.0, 0)), "eps2_end");
    let bad_scale = EngineConfig {
        proposal_scale: 0.0,
        ..config(Algorithm::AbcSmc, 10, 0, 5, 0.1, 0)
    };
    assert_eq!(key(bad_scale), "proposal_scale");
    assert!(run_da_abc_smc(&config(Algorithm::AbcSmc, 10, 0, 5, 0.1, 0), &model, &Sequential).is_err());
}

#[test]
fn resume_continues_identically() {
    let model = toy(1.0);
    let cfg = config(Algorithm::AbcSmc, 200, 0, 100, 0.1, 17);
    let full = run_abc_smc(&cfg, &model, &Sequential).unwrap();

    let mut first = Sampler::new(cfg.clone(), &model, &Sequential).unwrap();
    for _ in 0..3 {
        first.step().unwrap();
    }
    let part = first.into_output();
    let resumed = Sampler::resume(cfg, &model, &Sequential, part.population, part.trace, part.cost).unwrap();
    let rest = resumed.run(|_| {}).unwrap();
    assert_eq!(rest.trace.rows, full.trace.rows);
    assert_eq!(rest.population.d2_values(), full.population.d2_values());
}

#[test]
fn normalising_constant_matches_closed_form() {
    // x ~ N(0, 2) marginally, so P(|x - y| < eps) has a closed form.
    let model = GaussianToy::new(GaussianToyConfig::default()).unwrap();
    let eps = 0.5;
    let z_true = libm::erf(eps / 2.0);
    let mut logs = Vec::new();
    for seed in 0..5 {
        let out = run_abc_smc(&config(Algorithm::AbcSmc, 2000, 0, 1000, eps, seed), &model, &Sequential).unwrap();
        let last = out.trace.rows.last().unwrap();
        assert_eq!(last.eps2, eps);
        logs.push(normalising_constant_estimate(&out.trace).ln());
    }
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    assert!((mean - z_true.ln()).abs() < 0.1, "{mean} vs {}", z_true.ln());
}
