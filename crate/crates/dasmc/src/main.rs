use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dasmc::{experiment, CliResult, Config, Overrides, PoolExecutor};

/// ABC-SMC and delayed-acceptance ABC-SMC for simulator models.
#[derive(Parser)]
#[command(name = "dasmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core. Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured sampler; writes trace.csv and population.txt.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides `out_dir` in the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Simulate an observation file from the configured model.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output path; defaults to the config's obs_file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the predator-prey summary scales from prior-predictive runs.
    Pilot {
        #[command(flatten)]
        common: Common,
        /// Number of runs; defaults to lv.pilot_n.
        #[arg(long)]
        n: Option<usize>,
        /// Output path; defaults to the config's norm_file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common, out_dir: Option<PathBuf>) -> CliResult<(Config, PoolExecutor)> {
    let overrides = Overrides {
        seed: common.seed,
        out_dir,
    };
    let cfg = Config::load(&common.config, &overrides)?;
    let exec = PoolExecutor::new(common.workers)?;
    Ok((cfg, exec))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { common, out_dir } => {
            let (cfg, exec) = load(&common, out_dir)?;
            let summary = experiment::run(&cfg, &exec)?;
            println!("{summary}");
        }
        Command::Generate { common, out } => {
            let (cfg, _) = load(&common, None)?;
            let path = experiment::generate(&cfg, out.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Pilot { common, n, out } => {
            let (cfg, exec) = load(&common, None)?;
            let (path, norm) = experiment::pilot(&cfg, n, out.as_deref(), &exec)?;
            let scales: Vec<String> = norm.iter().map(|v| format!("{v:.4}")).collect();
            println!("wrote {} scales=[{}]", path.display(), scales.join(", "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dasmc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
