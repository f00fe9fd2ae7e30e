//! The `run`, `generate` and `pilot` commands.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dasmc_core::engine::{Executor, Sampler};
use dasmc_core::model::SimulatorPair;
use dasmc_core::models::gaussian::GaussianToy;
use dasmc_core::models::ising::{self, LatentIsing};
use dasmc_core::models::lv::{self, EmSchedule, LotkaVolterra, N_STATS};
use dasmc_core::particle::RunStatus;
use dasmc_core::rng::{stream, Purpose};

use crate::config::{Config, IsingModelConfig, LvModelConfig, ModelConfig};
use crate::error::{CliError, CliResult};
use crate::format::{self, FormatError, TraceHeader};

pub const TRACE_FILE: &str = "trace.csv";
pub const POPULATION_FILE: &str = "population.txt";

/// Event cap for generating predator-prey data with the exact simulator.
pub const MAX_GILLESPIE_EVENTS: u64 = 100_000_000;

/// What `run` prints when it finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub status: RunStatus,
    pub iterations: usize,
    pub eps2: f64,
    pub cost: u64,
    pub n_unique: usize,
    pub out_dir: PathBuf,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "status={} iterations={} eps2={} cost={} n_unique={} out={}",
            self.status.label(),
            self.iterations,
            self.eps2,
            self.cost,
            self.n_unique,
            self.out_dir.display()
        )
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn parse_error(path: &Path, err: FormatError) -> CliError {
    CliError::Config(format!("{}: {err}", path.display()))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Runs the configured sampler, writing the trace row by row.
pub fn run<E: Executor>(cfg: &Config, exec: &E) -> CliResult<RunSummary> {
    match &cfg.model {
        ModelConfig::Gaussian(g) => drive(cfg, &GaussianToy::new(*g)?, exec),
        ModelConfig::Lv(m) => drive(cfg, &load_lv(m)?, exec),
        ModelConfig::Ising(m) => drive(cfg, &load_ising(m)?, exec),
    }
}

fn drive<M: SimulatorPair, E: Executor>(cfg: &Config, model: &M, exec: &E) -> CliResult<RunSummary> {
    let trace_path = cfg.out_dir.join(TRACE_FILE);
    let mut out = create(&trace_path)?;
    let io = |e| CliError::io(&trace_path, e);
    let header = TraceHeader {
        config_sha256: cfg.hash.clone(),
        algorithm: cfg.engine.algorithm.label().to_string(),
        model: cfg.model.name().to_string(),
        n_particles: cfg.engine.n_particles,
    };
    format::write_trace_header(&mut out, &header).map_err(io)?;
    let mut sampler = Sampler::new(cfg.engine.clone(), model, exec)?;
    format::write_trace_row(&mut out, &sampler.trace().rows[0]).map_err(io)?;
    out.flush().map_err(io)?;
    while let Some(row) = sampler.step()? {
        format::write_trace_row(&mut out, &row).map_err(io)?;
        out.flush().map_err(io)?;
    }
    format::write_trace_footer(&mut out, sampler.status()).map_err(io)?;
    out.flush().map_err(io)?;

    let pop_path = cfg.out_dir.join(POPULATION_FILE);
    let mut pop_out = create(&pop_path)?;
    format::write_population(&mut pop_out, sampler.population(), sampler.cost())
        .and_then(|_| pop_out.flush())
        .map_err(|e| CliError::io(&pop_path, e))?;

    let last = *sampler.trace().last().expect("trace has an initial row");
    Ok(RunSummary {
        status: sampler.status(),
        iterations: last.t,
        eps2: last.eps2,
        cost: sampler.cost().total(),
        n_unique: last.n_unique,
        out_dir: cfg.out_dir.clone(),
    })
}

/// Reads the observation and normalization files of a predator-prey config.
pub fn load_lv(m: &LvModelConfig) -> CliResult<LotkaVolterra> {
    let (t, x, y) = format::read_lv_observations(&read_text(&m.obs_file)?).map_err(|e| parse_error(&m.obs_file, e))?;
    let expected = m.settings.obs_times();
    if t.len() != expected.len() || t.iter().zip(&expected).any(|(a, b)| (a - b).abs() > 1e-9 * b.max(1.0)) {
        return Err(CliError::Config(format!(
            "{}: observation times do not match horizon {} and obs_interval {} ({} times expected)",
            m.obs_file.display(),
            m.settings.horizon,
            m.settings.obs_interval,
            expected.len()
        )));
    }
    let norm_path = m.norm_file.as_ref().ok_or_else(|| CliError::missing("lv.norm_file"))?;
    let norm = format::read_norm(&read_text(norm_path)?).map_err(|e| parse_error(norm_path, e))?;
    Ok(LotkaVolterra::from_data(
        m.settings,
        m.step_cheap,
        m.step_expensive,
        &x,
        &y,
        norm,
    )?)
}

pub fn load_ising(m: &IsingModelConfig) -> CliResult<LatentIsing> {
    let grid = format::read_spin_grid(&read_text(&m.obs_file)?).map_err(|e| parse_error(&m.obs_file, e))?;
    Ok(LatentIsing::new(m.ising, &grid)?)
}

/// Simulates a data set from the configured model and writes it to `out`,
/// or to the config's `obs_file`. Returns the path written.
pub fn generate(cfg: &Config, out: Option<&Path>) -> CliResult<PathBuf> {
    let mut rng = stream(cfg.engine.seed, Purpose::Data, 0, 0);
    match &cfg.model {
        ModelConfig::Gaussian(_) => Err(CliError::invalid(
            "model",
            "the gaussian model has no data file; set gaussian.y_obs",
        )),
        ModelConfig::Ising(m) => {
            let grid = ising::generate(
                m.ising.side,
                m.theta_x_true,
                m.theta_y_true,
                m.ising.total_sweeps,
                m.ising.scan,
                &mut rng,
            );
            let path = out.unwrap_or(&m.obs_file).to_path_buf();
            let mut w = create(&path)?;
            format::write_spin_grid(&mut w, &grid)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        }
        ModelConfig::Lv(m) => {
            let traj = lv::gillespie(m.rates_true, &m.settings, MAX_GILLESPIE_EVENTS, &mut rng);
            if traj.diverged {
                return Err(CliError::Runtime(format!(
                    "exact simulation exceeded {MAX_GILLESPIE_EVENTS} events"
                )));
            }
            let path = out.unwrap_or(&m.obs_file).to_path_buf();
            let mut w = create(&path)?;
            format::write_lv_observations(&mut w, &traj.times, &traj.x, &traj.y)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        }
    }
}

/// Normalization scales from `n` (default `lv.pilot_n`) prior-predictive runs
/// of the expensive simulator, written to `out` or the config's `norm_file`.
pub fn pilot<E: Executor>(
    cfg: &Config,
    n: Option<usize>,
    out: Option<&Path>,
    exec: &E,
) -> CliResult<(PathBuf, [f64; N_STATS])> {
    let ModelConfig::Lv(m) = &cfg.model else {
        return Err(CliError::invalid("model", "pilot runs apply to the lv model only"));
    };
    let path = match (out, &m.norm_file) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => return Err(CliError::missing("lv.norm_file")),
    };
    let schedule = EmSchedule::new(m.step_expensive, &m.settings)?;
    let norm = lv::pilot_normalization(n.unwrap_or(m.pilot_n), &m.settings, &schedule, cfg.engine.seed, exec)?;
    let mut w = create(&path)?;
    format::write_norm(&mut w, &norm)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path, e))?;
    Ok((path, norm))
}
