use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use geqhom_cli::config::{Experiment, ExperimentConfig};
use geqhom_cli::error::CliError;
use geqhom_cli::experiments::Runner;
use geqhom_cli::output::{write_manifest, Manifest, Output, Versions};

#[derive(Parser)]
#[command(name = "geqhom", version, about = "Travel-time and homogenization experiments for the G-equation")]
struct Cli {
    /// JSON experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ensemble statistics of the field and one sampled realization.
    Field,
    /// Integrate a controlled trajectory or descend an optimal path.
    Trajectory,
    /// Travel times from a source to targets.
    Tau,
    /// Wulff set and effective Hamiltonian.
    Wulff,
    /// Solve the front equation with the configured methods.
    Geq,
    /// Empirical checks of the homogenization conditions.
    Conditions,
    /// Run the acceptance criteria.
    Acceptance,
    /// Run the experiment named in a config file.
    Run {
        config: PathBuf,
    },
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let (config_path, experiment) = match &cli.command {
        Command::Run { config } => (Some(config.clone()), None),
        Command::Field => (cli.config.clone(), Some(Experiment::Field)),
        Command::Trajectory => (cli.config.clone(), Some(Experiment::Trajectory)),
        Command::Tau => (cli.config.clone(), Some(Experiment::Tau)),
        Command::Wulff => (cli.config.clone(), Some(Experiment::Wulff)),
        Command::Geq => (cli.config.clone(), Some(Experiment::Geq)),
        Command::Conditions => (cli.config.clone(), Some(Experiment::Conditions)),
        Command::Acceptance => (cli.config.clone(), Some(Experiment::Acceptance)),
    };
    let mut cfg = load(config_path.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    let experiment = experiment
        .or(cfg.experiment)
        .ok_or_else(|| CliError::Config("`run` needs an `experiment` field in the config".into()))?;
    cfg.validate()?;
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }

    let hash = cfg.hash();
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
    let out = Output::new(&dir, &hash)?;
    let mut runner = Runner::new(&cfg, out);
    if experiment == Experiment::Acceptance {
        runner.on_criterion = Box::new(|c| println!("{}", c.line()));
    }
    let result = runner.run(experiment);
    let exit_code = match &result {
        Ok(()) => 0,
        Err(e) => e.exit_code(),
    };
    let manifest = Manifest {
        experiment: experiment.name().to_string(),
        config_hash: hash,
        seed: cfg.seed,
        config: serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?,
        versions: Versions::current(),
        threads: rayon::current_num_threads(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        jobs: runner.timings.clone(),
        artifacts: runner.out.artifacts().to_vec(),
        exit_code,
    };
    write_manifest(&dir, &manifest)?;
    println!("wrote {} artifacts to {}", manifest.artifacts.len(), dir.display());
    result
}
