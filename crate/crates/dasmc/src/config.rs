//! Experiment configuration files.
//!
//! A config is a TOML document. Top-level keys:
//!
//! | key            | type    | notes                                              |
//! |----------------|---------|----------------------------------------------------|
//! | algorithm      | string  | `abc_smc` or `da_abc_smc`                          |
//! | model          | string  | `gaussian`, `lv` or `ising`                        |
//! | N              | integer | particles                                          |
//! | A              | integer | expensive simulations per iteration (DA only)      |
//! | U              | integer | unique particles kept per iteration                |
//! | eps2_end       | float   | terminal tolerance; default 0.15 (lv), 0 (ising)   |
//! | eps2_start     | float   | default `inf`                                      |
//! | eps1_start     | float   | default `inf`                                      |
//! | cost_budget    | integer | optional, in model cost units                      |
//! | seed           | integer | required unless `--seed` is given                  |
//! | proposal_scale | float   | covariance multiplier, default 1                   |
//! | stall_limit    | integer | zero-acceptance iterations before stopping, default 5 |
//! | out_dir        | string  | default `out/<config stem>`                        |
//!
//! The table named after the model holds its settings, see [`GaussianSection`],
//! [`LvSection`] and [`IsingSection`]. Relative file paths are resolved
//! against the directory holding the config file.

use std::path::{Path, PathBuf};

use dasmc_core::engine::{Algorithm, EngineConfig};
use dasmc_core::models::gaussian::GaussianToyConfig;
use dasmc_core::models::ising::{IsingConfig, Scan, DEFAULT_TOTAL_SWEEPS};
use dasmc_core::models::lv::{LvSettings, DEFAULT_RATES};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub algorithm: Option<String>,
    pub model: Option<String>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "A")]
    pub a: Option<usize>,
    #[serde(rename = "U")]
    pub u: Option<usize>,
    pub eps1_start: Option<f64>,
    pub eps2_start: Option<f64>,
    pub eps2_end: Option<f64>,
    pub cost_budget: Option<u64>,
    pub seed: Option<u64>,
    pub proposal_scale: Option<f64>,
    pub stall_limit: Option<usize>,
    pub out_dir: Option<String>,
    pub gaussian: Option<GaussianSection>,
    pub lv: Option<LvSection>,
    pub ising: Option<IsingSection>,
}

/// `[gaussian]`: `y_obs` (required), `prior_mean`, `prior_sd`,
/// `cheap_noise_sd`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSection {
    pub y_obs: Option<f64>,
    pub prior_mean: Option<f64>,
    pub prior_sd: Option<f64>,
    pub cheap_noise_sd: Option<f64>,
}

/// `[lv]`: `obs_file` (required), `norm_file` (required by `run` and
/// `pilot`), `step_cheap` (0.5), `step_expensive` (0.0005), `pilot_n`
/// (1000), `horizon` (30), `obs_interval` (2), `x0` (50), `y0` (100) and
/// `rates_true` (generator only, default `[1, 0.005, 0.6]`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LvSection {
    pub step_cheap: Option<f64>,
    pub step_expensive: Option<f64>,
    pub pilot_n: Option<usize>,
    pub obs_file: Option<String>,
    pub norm_file: Option<String>,
    pub horizon: Option<f64>,
    pub obs_interval: Option<f64>,
    pub x0: Option<u64>,
    pub y0: Option<u64>,
    pub rates_true: Option<[f64; 3]>,
}

/// `[ising]`: `L` and `obs_file` (required), `B` (1), `total_sweeps`
/// (1000), `scan` (`raster` or `random`), `theta_x_true` and
/// `theta_y_true` (generator only, default 0.1).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingSection {
    #[serde(rename = "L")]
    pub l: Option<usize>,
    #[serde(rename = "B")]
    pub b: Option<u64>,
    pub total_sweeps: Option<u64>,
    pub theta_x_true: Option<f64>,
    pub theta_y_true: Option<f64>,
    pub scan: Option<String>,
    pub obs_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LvModelConfig {
    pub settings: LvSettings,
    pub step_cheap: f64,
    pub step_expensive: f64,
    pub pilot_n: usize,
    pub obs_file: PathBuf,
    pub norm_file: Option<PathBuf>,
    pub rates_true: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsingModelConfig {
    pub ising: IsingConfig,
    pub theta_x_true: f64,
    pub theta_y_true: f64,
    pub obs_file: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Gaussian(GaussianToyConfig),
    Lv(LvModelConfig),
    Ising(IsingModelConfig),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Gaussian(_) => "gaussian",
            ModelConfig::Lv(_) => "lv",
            ModelConfig::Ising(_) => "ising",
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// A validated config.
#[derive(Debug, Clone)]
pub struct Config {
    pub raw: RawConfig,
    pub engine: EngineConfig,
    pub model: ModelConfig,
    pub out_dir: PathBuf,
    /// SHA-256 of the effective settings, hex encoded.
    pub hash: String,
}

impl Config {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        Self::parse(&text, base, stem, overrides)
    }

    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path, stem: &str, overrides: &Overrides) -> CliResult<Self> {
        let mut raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        if let Some(seed) = overrides.seed {
            raw.seed = Some(seed);
        }
        let model = resolve_model(&raw, base)?;
        let engine = resolve_engine(&raw, &model)?;
        let out_dir = match (&overrides.out_dir, &raw.out_dir) {
            (Some(dir), _) => dir.clone(),
            (None, Some(dir)) => base.join(dir),
            (None, None) => Path::new("out").join(stem),
        };
        let hash = config_hash(&raw)?;
        Ok(Self {
            raw,
            engine,
            model,
            out_dir,
            hash,
        })
    }
}

/// Hash of the settings that determine a run's output. `out_dir` is left
/// out so the same run written to two places hashes the same.
fn config_hash(raw: &RawConfig) -> CliResult<String> {
    let mut canonical = raw.clone();
    canonical.out_dir = None;
    let text = toml::to_string(&canonical).map_err(|e| CliError::Runtime(format!("serializing config: {e}")))?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn resolve_engine(raw: &RawConfig, model: &ModelConfig) -> CliResult<EngineConfig> {
    let label = raw.algorithm.as_deref().ok_or_else(|| CliError::missing("algorithm"))?;
    let algorithm = Algorithm::from_label(label)
        .ok_or_else(|| CliError::invalid("algorithm", format!("unknown algorithm `{label}`")))?;
    let n = raw.n.ok_or_else(|| CliError::missing("N"))?;
    let u = raw.u.ok_or_else(|| CliError::missing("U"))?;
    let a = match algorithm {
        Algorithm::DaAbcSmc => raw.a.ok_or_else(|| CliError::missing("A"))?,
        Algorithm::AbcSmc => raw.a.unwrap_or(n),
    };
    let default_end = match model {
        ModelConfig::Lv(_) => Some(0.15),
        ModelConfig::Ising(_) => Some(0.0),
        ModelConfig::Gaussian(_) => None,
    };
    let mut cfg = EngineConfig::new(algorithm, n, a, u);
    cfg.eps2_end = raw.eps2_end.or(default_end).ok_or_else(|| CliError::missing("eps2_end"))?;
    cfg.eps1_start = raw.eps1_start.unwrap_or(f64::INFINITY);
    cfg.eps2_start = raw.eps2_start.unwrap_or(f64::INFINITY);
    cfg.cost_budget = raw.cost_budget;
    cfg.seed = raw.seed.ok_or_else(|| CliError::missing("seed"))?;
    cfg.proposal_scale = raw.proposal_scale.unwrap_or(1.0);
    cfg.stall_limit = raw.stall_limit.unwrap_or(cfg.stall_limit);
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_model(raw: &RawConfig, base: &Path) -> CliResult<ModelConfig> {
    let name = raw.model.as_deref().ok_or_else(|| CliError::missing("model"))?;
    let table = |present: bool| if present { Ok(()) } else { Err(CliError::missing(&format!("[{name}]"))) };
    match name {
        "gaussian" => {
            table(raw.gaussian.is_some())?;
            let s = raw.gaussian.as_ref().unwrap();
            let d = GaussianToyConfig::default();
            let cfg = GaussianToyConfig {
                y_obs: s.y_obs.ok_or_else(|| CliError::missing("gaussian.y_obs"))?,
                prior_mean: s.prior_mean.unwrap_or(d.prior_mean),
                prior_sd: s.prior_sd.unwrap_or(d.prior_sd),
                cheap_noise_sd: s.cheap_noise_sd.unwrap_or(d.cheap_noise_sd),
            };
            cfg.validate()?;
            Ok(ModelConfig::Gaussian(cfg))
        }
        "lv" => {
            table(raw.lv.is_some())?;
            let s = raw.lv.as_ref().unwrap();
            let d = LvSettings::default();
            let settings = LvSettings {
                x0: s.x0.unwrap_or(d.x0),
                y0: s.y0.unwrap_or(d.y0),
                horizon: s.horizon.unwrap_or(d.horizon),
                obs_interval: s.obs_interval.unwrap_or(d.obs_interval),
            };
            settings.validate()?;
            let cfg = LvModelConfig {
                settings,
                step_cheap: s.step_cheap.unwrap_or(0.5),
                step_expensive: s.step_expensive.unwrap_or(0.0005),
                pilot_n: s.pilot_n.unwrap_or(1000),
                obs_file: base.join(s.obs_file.as_deref().ok_or_else(|| CliError::missing("lv.obs_file"))?),
                norm_file: s.norm_file.as_deref().map(|p| base.join(p)),
                rates_true: s.rates_true.unwrap_or(DEFAULT_RATES),
            };
            for (key, step) in [("lv.step_cheap", cfg.step_cheap), ("lv.step_expensive", cfg.step_expensive)] {
                if !(step > 0.0 && step.is_finite()) {
                    return Err(CliError::invalid(key, "must be positive"));
                }
            }
            if cfg.rates_true.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                return Err(CliError::invalid("lv.rates_true", "rates must be nonnegative"));
            }
            Ok(ModelConfig::Lv(cfg))
        }
        "ising" => {
            table(raw.ising.is_some())?;
            let s = raw.ising.as_ref().unwrap();
            let scan = match s.scan.as_deref().unwrap_or("raster") {
                "raster" => Scan::Raster,
                "random" => Scan::Random,
                other => return Err(CliError::invalid("ising.scan", format!("unknown scan `{other}`"))),
            };
            let ising = IsingConfig {
                side: s.l.ok_or_else(|| CliError::missing("ising.L"))?,
                cheap_sweeps: s.b.unwrap_or(1),
                total_sweeps: s.total_sweeps.unwrap_or(DEFAULT_TOTAL_SWEEPS),
                scan,
            };
            ising.validate()?;
            Ok(ModelConfig::Ising(IsingModelConfig {
                ising,
                theta_x_true: s.theta_x_true.unwrap_or(0.1),
                theta_y_true: s.theta_y_true.unwrap_or(0.1),
                obs_file: base.join(s.obs_file.as_deref().ok_or_else(|| CliError::missing("ising.obs_file"))?),
            }))
        }
        other => Err(CliError::invalid("model", format!("unknown model `{other}`"))),
    }
}
