use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lmcts_cli::commands::{self, describe_check, Options};
use lmcts_cli::config::ExperimentConfig;
use lmcts_cli::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "lmcts",
    version,
    about = "Langevin Monte Carlo Thompson sampling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (default: run.out, else ./results).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seeds run in parallel.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Added to every seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one agent on one environment over all seeds.
    Simulate { config: PathBuf },
    /// Compare simulated Langevin chains with their exact Gaussian law.
    Diagnose { config: PathBuf },
    /// Run every cell of the config's [grid] and rank them.
    Sweep { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let opts = Options {
        out: cli.out,
        jobs: cli.jobs,
        seed_offset: cli.seed_offset,
    };
    match cli.command {
        Command::Simulate { config } => {
            let config = ExperimentConfig::load(&config)?;
            let report = commands::simulate(&config, &opts)?;
            println!(
                "{}: {} seeds, {} rounds, final mean regret {:.4} (stderr {:.4})",
                report.tag,
                report.runs.records.len(),
                report.runs.aggregate.mean.len(),
                report.runs.aggregate.final_mean(),
                report.runs.aggregate.stderr.last().copied().unwrap_or(0.0)
            );
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Sweep { config } => {
            let config = ExperimentConfig::load(&config)?;
            let report = commands::sweep(&config, &opts)?;
            for row in &report.rows {
                println!(
                    "{:>3}. cell {:<3} final mean regret {:>12.4} ± {:.4}  {}",
                    row.rank, row.cell, row.final_mean_regret, row.final_stderr, row.params
                );
            }
            println!("wrote {}", report.summary.display());
        }
        Command::Diagnose { config } => {
            let config = ExperimentConfig::load(&config)?;
            let check = commands::diagnose(&config)?;
            let threshold = config.diagnose.as_ref().map_or(4.0, |d| d.threshold);
            let lines = describe_check(&check, threshold);
            for line in &lines {
                println!("{line}");
            }
            if !check.passes(threshold) {
                return Err(CliError::Diagnostic(format!(
                    "max |z| {:.3} exceeds {threshold}",
                    check.max_abs_z()
                )));
            }
            println!("pass");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
