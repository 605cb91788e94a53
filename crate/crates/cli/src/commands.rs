//! The `simulate`, `sweep` and `diagnose` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lmcts::diagnostics::{moment_check, random_linear_histories, MomentCheck};
use lmcts::harness::{run_many, toml_string, write_results, Experiment, ManyRuns};
use lmcts::linalg::extreme_eigenvalues;
use lmcts::sampler::LmcSchedule;
use nalgebra::DVector;

use crate::config::{render, DiagnoseConfig, ExperimentConfig};
use crate::CliError;

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed_offset: u64,
}

impl Options {
    fn out_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.run.as_ref().and_then(|r| r.out.clone()))
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    fn jobs(&self, config: &ExperimentConfig) -> usize {
        self.jobs
            .or_else(|| config.run.as_ref().and_then(|r| r.jobs))
            .unwrap_or(1)
            .max(1)
    }
}

/// A finished multi-seed run and the files it wrote.
#[derive(Debug)]
pub struct SimulateReport {
    pub tag: String,
    pub runs: ManyRuns,
    pub files: Vec<PathBuf>,
}

fn prepare(config: &ExperimentConfig) -> Result<Experiment, CliError> {
    let env = config.require_env()?.clone();
    let agent = config.require_agent()?.clone();
    let run = config.require_run()?;
    Experiment::new(agent, env, run.horizon).map_err(|e| CliError::Config(e.to_string()))
}

fn run_and_write(
    config: &ExperimentConfig,
    experiment: &Experiment,
    tag: &str,
    out: &Path,
    opts: &Options,
    extra: &[(String, String)],
) -> Result<SimulateReport, CliError> {
    let run = config.require_run()?;
    let seeds = run.seeds(opts.seed_offset);
    let runs = run_many(experiment, &seeds, opts.jobs(config))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut meta = config.flatten()?;
    meta.push(("cli.seed_offset".into(), opts.seed_offset.to_string()));
    meta.extend_from_slice(extra);
    let files =
        write_results(out, tag, &runs, &meta).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(SimulateReport {
        tag: tag.to_string(),
        runs,
        files,
    })
}

fn failed_seeds(report: &SimulateReport) -> Option<CliError> {
    if report.runs.failures.is_empty() {
        return None;
    }
    let list: Vec<String> = report
        .runs
        .failures
        .iter()
        .map(|(_, e)| e.to_string())
        .collect();
    Some(CliError::Runtime(format!(
        "{} of {} seeds failed: {}",
        list.len(),
        report.runs.seeds.len(),
        list.join("; ")
    )))
}

/// Runs every seed of the config and writes its result files.
///
/// Failed seeds are reported as a runtime error after the successful ones
/// have been written.
pub fn simulate(config: &ExperimentConfig, opts: &Options) -> Result<SimulateReport, CliError> {
    let experiment = prepare(config)?;
    let run = config.require_run()?;
    let report = run_and_write(
        config,
        &experiment,
        &run.tag,
        &opts.out_dir(config),
        opts,
        &[],
    )?;
    match failed_seeds(&report) {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// One grid cell's place in the sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rank: usize,
    pub cell: usize,
    pub tag: String,
    pub params: String,
    pub final_mean_regret: f64,
    pub final_stderr: f64,
    pub failed_seeds: usize,
}

#[derive(Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub summary: PathBuf,
}

/// Runs every grid cell and writes `<tag>_summary.csv`, ranked by final
/// mean cumulative regret. A cell whose seeds all fail is kept with an
/// infinite final regret.
pub fn sweep(config: &ExperimentConfig, opts: &Options) -> Result<SweepReport, CliError> {
    let cells = config.grid_cells()?;
    let out = opts.out_dir(config);
    let base_tag = config.require_run()?.tag.clone();
    // Validate every cell before running any.
    let experiments = cells
        .iter()
        .enumerate()
        .map(|(i, (assignment, cell))| {
            prepare(cell).map_err(|e| {
                CliError::Config(format!("grid cell {i} ({}): {e}", describe(assignment)))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(cells.len());
    for (i, ((assignment, cell), experiment)) in cells.iter().zip(&experiments).enumerate() {
        let tag = format!("{base_tag}_cell{i}");
        let params = describe(assignment);
        log::info!("cell {i}: {params}");
        let extra: Vec<(String, String)> = assignment
            .iter()
            .map(|(k, v)| (format!("grid.{}", toml_string(k)), render(v)))
            .collect();
        let row = match run_and_write(cell, experiment, &tag, &out, opts, &extra) {
            Ok(report) => SweepRow {
                rank: 0,
                cell: i,
                tag,
                params,
                final_mean_regret: report.runs.aggregate.final_mean(),
                final_stderr: report.runs.aggregate.stderr.last().copied().unwrap_or(0.0),
                failed_seeds: report.runs.failures.len(),
            },
            // Every seed failed; the cell ranks last.
            Err(CliError::Runtime(message)) => {
                log::warn!("cell {i} ({params}) failed: {message}");
                SweepRow {
                    rank: 0,
                    cell: i,
                    tag,
                    params,
                    final_mean_regret: f64::INFINITY,
                    final_stderr: f64::NAN,
                    failed_seeds: cell.require_run()?.seeds(opts.seed_offset).len(),
                }
            }
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| {
        a.final_mean_regret
            .total_cmp(&b.final_mean_regret)
            .then(a.cell.cmp(&b.cell))
    });
    let mut text =
        String::from("rank,cell,tag,final_mean_regret,final_stderr,failed_seeds,params\n");
    for (rank, row) in rows.iter_mut().enumerate() {
        row.rank = rank + 1;
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},\"{}\"",
            row.rank,
            row.cell,
            row.tag,
            row.final_mean_regret,
            row.final_stderr,
            row.failed_seeds,
            row.params.replace('"', "\"\"")
        );
    }
    let summary = out.join(format!("{base_tag}_summary.csv"));
    fs::write(&summary, text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", summary.display())))?;
    Ok(SweepReport { rows, summary })
}

fn describe(assignment: &[(String, toml::Value)]) -> String {
    assignment
        .iter()
        .map(|(k, v)| format!("{k}={}", render(v)))
        .collect::<Vec<_>>()
        .join(";")
}

/// Per-epoch schedules with `η_i = step_fraction / λ_max(V_i)`.
pub fn diagnose_schedules(
    histories: &[lmcts::domain::History],
    step_fraction: f64,
    beta: f64,
    epoch_length: usize,
) -> Result<Vec<LmcSchedule>, CliError> {
    histories
        .iter()
        .map(|h| {
            let (_, lambda_max) = extreme_eigenvalues(h.gram());
            LmcSchedule::new(step_fraction / lambda_max, beta, epoch_length)
                .map_err(|e| CliError::Config(e.to_string()))
        })
        .collect()
}

/// Simulates the configured chains and compares them with the exact law.
pub fn diagnose(config: &ExperimentConfig) -> Result<MomentCheck, CliError> {
    let d: &DiagnoseConfig = config
        .diagnose
        .as_ref()
        .ok_or_else(|| CliError::Config("diagnose needs a [diagnose] section".into()))?;
    if d.dim == 0 || d.rounds == 0 || d.chains < 2 {
        return Err(CliError::Config(
            "diagnose needs dim >= 1, rounds >= 1 and chains >= 2".into(),
        ));
    }
    if !(d.threshold > 0.0) {
        return Err(CliError::Config("diagnose.threshold must be > 0".into()));
    }
    let histories = random_linear_histories(d.dim, d.rounds, d.lambda, d.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let schedules = diagnose_schedules(&histories, d.step_fraction, d.beta, d.epoch_length)?;
    let oracle = if d.mismatch {
        diagnose_schedules(
            &histories,
            d.step_fraction * d.mismatch_factor,
            d.beta,
            d.epoch_length,
        )?
    } else {
        schedules.clone()
    };
    let start = DVector::zeros(d.dim);
    let check = moment_check(&histories, &schedules, &oracle, &start, d.chains, d.seed).map_err(
        |e| match e {
            lmcts::Error::InvalidSchedule(_) | lmcts::Error::InvalidInput(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        },
    )?;
    Ok(check)
}

/// Human-readable lines for a moment check.
pub fn describe_check(check: &MomentCheck, threshold: f64) -> Vec<String> {
    let max_mean = check.mean_z.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let max_cov = check
        .covariance_z
        .iter()
        .fold(0.0f64, |m, z| m.max(z.abs()));
    let mut lines = vec![
        format!("chains: {}", check.chains),
        format!("max |z| mean: {max_mean:.3}"),
        format!("max |z| covariance: {max_cov:.3}"),
        format!("threshold: {threshold}"),
    ];
    lines.extend(check.offending(threshold));
    lines
}
