use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scaledsm::bench::{self, ExperimentConfig};
use scaledsm::error::Error;

/// Benchmark harness for robust low-rank matrix recovery with scaled
/// subgradient methods.
#[derive(Parser)]
#[command(name = "scaledsm", version, about)]
struct Cli {
    /// Number of worker threads (defaults to the logical CPU count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to the experiment TOML.
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for traces and reports.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep geometric stepsize parameters on one fixed instance.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Estimate the operator's mixed-norm RIP constants.
    Rip {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-execute a previous run from its serialized bundles.
    Replay {
        /// Directory of a previous run (holding report.json & bundles).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut config = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = seed {
        config.problem.seed = seed;
    }
    Ok(config)
}

fn print_summary(report: &bench::RunReport) {
    for cell in &report.cells {
        for run in &cell.runs {
            let iters = run
                .iters_to_tol
                .map_or("-".to_string(), |i| i.to_string());
            println!(
                "{:32} {:28} status={:<10} final_rel_err={:10.3e} iters_to_1e-10={iters}",
                cell.params.dir_name(),
                run.solver,
                run.status.to_string(),
                run.final_rel_err,
            );
        }
    }
    for rip in &report.rip {
        println!(
            "rip rank={} probed={} delta1={:.4} delta2={:.4} delta3={} chi={:.3} predicted_iters(1e-10)={:.0}",
            rip.rank,
            rip.estimate.rank_probed,
            rip.estimate.delta1_hat,
            rip.estimate.delta2_hat,
            rip.estimate
                .delta3_hat
                .map_or("-".to_string(), |d| format!("{d:.4}")),
            rip.chi_hat,
            rip.predicted_iters_1e10
        );
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    let report = match &cli.command {
        Command::Run { config, seed, out } => bench::cmd_run(&load_config(config, *seed)?, out)?,
        Command::Grid { config, seed, out } => bench::cmd_grid(&load_config(config, *seed)?, out)?,
        Command::Rip { config, seed, out } => bench::cmd_rip(&load_config(config, *seed)?, out)?,
        Command::Replay { config, out } => bench::cmd_replay(config, out)?,
    };
    print_summary(&report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ (Error::Config(_) | Error::InvalidInput(_))) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
