use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use snl_cli::{artifacts::Manifest, diagnose, emit_curves, run_experiment, simulate, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "snl", version, about = "Likelihood-free inference experiments")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir` in the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the model (pilot, whitening, observed data) and simulate it.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated parameters; the ground truth by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Run the configured method and write its artifacts.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute metrics (and calibration, if configured) for finished runs.
    Diagnose {
        /// Result directories written by `run`.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Collect metrics of many runs into plot-ready CSV files.
    Curves {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), ConfigError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = Some(out.clone());
    }
    config.validate()?;
    let out = config
        .output_dir
        .clone()
        .ok_or_else(|| ConfigError("no output directory: pass --out or set output_dir".into()))?;
    Ok((config, out))
}

fn check_complete(dir: &Path) -> anyhow::Result<()> {
    Manifest::read(dir).map(|_| ()).with_context(|| format!("{} is not a result directory", dir.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(snl_cli::EXIT_CONFIG as u8);
        }
    }
    let result = match &cli.command {
        Command::Simulate { run, theta, count } => match load(run) {
            Ok((config, out)) => simulate(&config, &out, theta.clone(), *count).map(|_| ()),
            Err(e) => return config_failure(e),
        },
        Command::Run { run } => match load(run) {
            Ok((config, out)) => run_experiment(&config, &out).map(|m| {
                log::info!("{} simulator calls; artifacts in {}", m.simulator_calls, out.display());
            }),
            Err(e) => return config_failure(e),
        },
        Command::Diagnose { dirs } => dirs.iter().try_for_each(|d| {
            check_complete(d)?;
            diagnose(d).map(|_| ())
        }),
        Command::Curves { out, dirs } => emit_curves(dirs, out).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(snl_cli::EXIT_RUN as u8)
        }
    }
}

fn config_failure(e: ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(snl_cli::EXIT_CONFIG as u8)
}
