use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairdd::cli::{self, ExperimentConfig, Mode, Sweep};
use fairdd::data::DatasetSpec;
use fairdd::Result;

#[derive(Parser)]
#[command(
    name = "fairdd",
    version,
    about = "Fair domain-incremental training experiments"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic biased dataset as CSV.
    GenerateData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one run and write its run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "fairdd")]
        mode: Mode,
    },
    /// Recompute metrics from a prediction dump or run directory.
    Evaluate {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// FATE of an enhanced run against a baseline run.
    Fate {
        /// Defaults the run directories and lambda from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        enhanced: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one factor against a vanilla baseline.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sweep: Sweep,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Print a metrics table (×100) for one or more runs.
    Report {
        runs: Vec<PathBuf>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = fairdd::metrics::DEFAULT_FATE_LAMBDA)]
        lambda: f64,
    },
}

fn load(config: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(args: Args) -> Result<()> {
    match args.command {
        Command::GenerateData { config, out, seed } => {
            let cfg = load(&config)?;
            let spec = DatasetSpec {
                seed: seed.unwrap_or(cfg.dataset.seed),
                ..cfg.dataset
            };
            let data = cli::generate_data(&spec, &out)?;
            println!("wrote {} samples to {}", data.len(), out.display());
        }
        Command::Train { config, mode } => {
            let cfg = ExperimentConfig::load(&config)?;
            let run = cli::train(&cfg, mode)?;
            println!("{}", serde_json::to_string_pretty(&run.metrics)?);
            println!("run directory: {}", run.dir.display());
        }
        Command::Evaluate { input, out } => {
            let metrics = cli::evaluate_dump(&input, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::Fate {
            config,
            enhanced,
            baseline,
            lambda,
            out,
        } => {
            let cfg = load(&config)?;
            let enhanced = enhanced.unwrap_or_else(|| cfg.run_dir(Mode::FairDD));
            let baseline = baseline.unwrap_or_else(|| cfg.run_dir(Mode::Vanilla));
            let out = out.unwrap_or_else(|| cfg.output_root().join(&cfg.run_id));
            let report = cli::fate(
                &enhanced,
                &baseline,
                lambda.unwrap_or(cfg.fate_lambda),
                &out,
            )?;
            for e in &report.entries {
                println!(
                    "{:<6} FATE {:>8.2} (x100)",
                    e.criterion.to_string(),
                    e.scaled()
                );
            }
        }
        Command::Ablate {
            config,
            sweep,
            values,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let table = cli::ablate(&cfg, sweep, Some(&values))?;
            print!("{}", table.to_csv()?);
        }
        Command::Report {
            runs,
            baseline,
            lambda,
        } => print!("{}", cli::report(&runs, baseline.as_deref(), lambda)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", cli::error_record(&e));
            ExitCode::FAILURE
        }
    }
}
