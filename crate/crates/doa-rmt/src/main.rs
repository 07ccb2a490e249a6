//! Command-line front end: theory reports, single-point simulations,
//! sweeps, and bound evaluation, all driven by JSON configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use doa_rmt::error::Error;
use doa_rmt::estimators::crb;
use doa_rmt::harness::{
    emit_plotdata, emit_stats, run_point, run_sweep, theory_report, AggregateStats,
    ExperimentConfig, OutputFormat,
};

#[derive(Parser)]
#[command(
    name = "doa-rmt",
    about = "Large-array DoA estimation: debiased subspace estimators, asymptotic theory, and a Monte Carlo harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic theory report (predicted angles, shrinkage factors,
    /// spike positions, detection thresholds, variance bound) as JSON.
    Theory {
        #[arg(long)]
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the aspect ratio N/T (0 gives the population-exact limit).
        #[arg(long)]
        c_override: Option<f64>,
    },
    /// Monte Carlo run of the base scenario (sweep section ignored).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trial count; overrides the config.
        #[arg(long)]
        trials: Option<u64>,
        /// Master seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: CliFormat,
    },
    /// Monte Carlo sweep over the config's axis with CSV output.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory for whitespace-separated x/y curve files.
        #[arg(long)]
        plotdata: Option<PathBuf>,
    },
    /// Evaluate the deterministic variance bound for the base scenario.
    Crb {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) | Error::Shape(_) | Error::Domain(_) => ExitCode::from(2),
                Error::Numerical(_) | Error::NonConvergence(_) | Error::Singular(_) => {
                    ExitCode::from(3)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}

/// Honors DOA_RMT_THREADS as a cap on the worker count.
fn init_thread_pool() {
    if let Ok(raw) = std::env::var("DOA_RMT_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Theory {
            config,
            out,
            c_override,
        } => {
            let cfg = load_config(&config)?;
            let report = theory_report(&cfg, c_override)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Simulate {
            config,
            trials,
            seed,
            out,
            format,
        } => {
            let cfg = load_config(&config)?;
            if cfg.methods.is_empty() {
                return Err(Error::Config("methods list is empty".into()));
            }
            let scenario = cfg.resolve_at(None)?;
            let trials = trials.unwrap_or(cfg.trials);
            let seed = seed.unwrap_or(cfg.master_seed);
            let label = 10.0 * scenario.snr_scale.log10();
            let (rows, diag) = run_point(
                &scenario,
                &cfg.methods,
                trials,
                seed,
                label,
                cfg.eigen_engine,
                cfg.music_grid,
            )?;
            let all_rejected = diag.rejected.iter().all(|&(_, r)| r == trials);
            if all_rejected {
                eprintln!("warning: every trial was rejected");
            }
            let stats = AggregateStats { rows };
            let fmt = match format {
                CliFormat::Csv => OutputFormat::Csv,
                CliFormat::Json => OutputFormat::Json,
            };
            emit_stats(&stats, fmt, &out)
        }
        Command::Sweep {
            config,
            out,
            plotdata,
        } => {
            let cfg = load_config(&config)?;
            if cfg.methods.is_empty() {
                return Err(Error::Config("methods list is empty".into()));
            }
            let stats = run_sweep(&cfg)?;
            emit_stats(&stats, OutputFormat::Csv, &out)?;
            if let Some(dir) = plotdata {
                emit_plotdata(&stats, &dir)?;
            }
            Ok(())
        }
        Command::Crb { config } => {
            let cfg = load_config(&config)?;
            let scenario = cfg.resolve_at(None)?;
            let values = crb(&scenario)?;
            let doc = serde_json::json!({
                "theta_rad": scenario.thetas,
                "crb": values,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
    }
}
