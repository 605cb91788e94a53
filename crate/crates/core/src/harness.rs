//! Seeded simulation runner and result files.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::agents::AgentConfig;
use crate::envs::{EnvConfig, PreparedEnv};
use crate::error::{Error, Result};
use crate::linalg::factorization_count;

/// An agent, an environment and a horizon, validated and ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub agent: AgentConfig,
    pub env: EnvConfig,
    pub horizon: usize,
    prepared: PreparedEnv,
    fingerprint: String,
}

impl Experiment {
    pub fn new(agent: AgentConfig, env: EnvConfig, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        let prepared = env.prepare()?;
        agent.validate(prepared.dim(), horizon)?;
        let fingerprint = fingerprint(&format!("{agent:?}\n{env:?}\nT={horizon}"));
        Ok(Self {
            agent,
            env,
            horizon,
            prepared,
            fingerprint,
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn dim(&self) -> usize {
        self.prepared.dim()
    }
}

/// Hex SHA-256 of `text`.
pub fn fingerprint(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Everything recorded for one seed. Per-round vectors share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub fingerprint: String,
    pub chosen: Vec<usize>,
    pub reward: Vec<f64>,
    pub expected: Vec<f64>,
    pub regret: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub select_secs: Vec<f64>,
    pub update_secs: Vec<f64>,
    /// Cholesky factorizations performed inside each `select` call.
    pub select_factorizations: Vec<u64>,
    /// FNV-1a digest of every arm set the environment served.
    pub arms_digest: u64,
    pub truncated: Option<String>,
    pub stats: Vec<(String, String)>,
}

impl RunRecord {
    pub fn rounds(&self) -> usize {
        self.chosen.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn total_select_secs(&self) -> f64 {
        self.select_secs.iter().sum()
    }

    pub fn total_update_secs(&self) -> f64 {
        self.update_secs.iter().sum()
    }
}

fn fnv1a(mut hash: u64, value: u64) -> u64 {
    for byte in value.to_le_bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Runs select → pull → update for the experiment's horizon.
pub fn run_one(experiment: &Experiment, seed: u64) -> Result<RunRecord> {
    let at = |round: usize| {
        move |e: Error| Error::AtRound {
            seed,
            round,
            source: Box::new(e),
        }
    };
    let mut env = experiment.prepared.build(seed).map_err(at(0))?;
    let mut policy = experiment
        .agent
        .build(env.dim(), experiment.horizon, seed)
        .map_err(at(0))?;
    let mut horizon = experiment.horizon;
    let mut truncated = None;
    if let Some(max) = env.max_rounds() {
        if max < horizon {
            truncated = Some(format!(
                "dataset has {max} instances; horizon truncated from {horizon} to {max}"
            ));
            log::warn!("seed {seed}: horizon truncated from {horizon} to {max} rounds");
            horizon = max;
        }
    }
    let mut record = RunRecord {
        seed,
        fingerprint: experiment.fingerprint.clone(),
        chosen: Vec::with_capacity(horizon),
        reward: Vec::with_capacity(horizon),
        expected: Vec::with_capacity(horizon),
        regret: Vec::with_capacity(horizon),
        cumulative: Vec::with_capacity(horizon),
        select_secs: Vec::with_capacity(horizon),
        update_secs: Vec::with_capacity(horizon),
        select_factorizations: Vec::with_capacity(horizon),
        arms_digest: 0xcbf2_9ce4_8422_2325,
        truncated,
        stats: Vec::new(),
    };
    let mut total = 0.0;
    for round in 1..=horizon {
        let arms = env.next_arms().map_err(at(round))?;
        for x in arms.iter() {
            for v in x.iter() {
                record.arms_digest = fnv1a(record.arms_digest, v.to_bits());
            }
        }

        let factorizations = factorization_count();
        let start = Instant::now();
        let index = policy.select(&arms).map_err(at(round))?;
        let select = start.elapsed();
        record
            .select_factorizations
            .push(factorization_count() - factorizations);

        let outcome = env.pull(&arms, index).map_err(at(round))?;

        let start = Instant::now();
        policy
            .update(&arms[index], outcome.reward)
            .map_err(at(round))?;
        let update = start.elapsed();

        total += outcome.regret;
        record.chosen.push(index);
        record.reward.push(outcome.reward);
        record.expected.push(outcome.expected);
        record.regret.push(outcome.regret);
        record.cumulative.push(total);
        record.select_secs.push(select.as_secs_f64());
        record.update_secs.push(update.as_secs_f64());
    }
    record.stats = policy
        .stats()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(record)
}

/// Per-round mean and standard error of cumulative regret over `n` runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    /// Sample standard deviation over `√n`; 0 when `n = 1`.
    pub stderr: Vec<f64>,
    pub n: usize,
}

impl Aggregate {
    /// Aggregates curves over their common prefix.
    pub fn from_curves(curves: &[&[f64]]) -> Result<Self> {
        let n = curves.len();
        if n == 0 {
            return Err(Error::invalid("nothing to aggregate"));
        }
        let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
        let mut mean = Vec::with_capacity(len);
        let mut stderr = Vec::with_capacity(len);
        for t in 0..len {
            let m = curves.iter().map(|c| c[t]).sum::<f64>() / n as f64;
            let se = if n > 1 {
                let var = curves.iter().map(|c| (c[t] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            mean.push(m);
            stderr.push(se);
        }
        Ok(Self { mean, stderr, n })
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }
}

/// Outcome of a multi-seed run: successful records in seed order, failures,
/// and the aggregate over the successes.
#[derive(Debug)]
pub struct ManyRuns {
    pub seeds: Vec<u64>,
    pub records: Vec<RunRecord>,
    pub failures: Vec<(u64, Error)>,
    pub aggregate: Aggregate,
    pub wall_secs: f64,
}

/// Runs every seed, `jobs` at a time, and aggregates the successes.
pub fn run_many(experiment: &Experiment, seeds: &[u64], jobs: usize) -> Result<ManyRuns> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::invalid(format!("seed {dup} is listed twice")));
    }
    let start = Instant::now();
    let results: Vec<Result<RunRecord>> = if jobs <= 1 {
        seeds.iter().map(|&s| run_one(experiment, s)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| seeds.par_iter().map(|&s| run_one(experiment, s)).collect())
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&seed, result) in seeds.iter().zip(results) {
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                log::error!("{e}");
                failures.push((seed, e));
            }
        }
    }
    if records.is_empty() {
        let (_, first) = failures.swap_remove(0);
        return Err(first);
    }
    let curves: Vec<&[f64]> = records.iter().map(|r| r.cumulative.as_slice()).collect();
    let aggregate = Aggregate::from_curves(&curves)?;
    Ok(ManyRuns {
        seeds: seeds.to_vec(),
        records,
        failures,
        aggregate,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Quotes `s` as a basic TOML string.
pub fn toml_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders a float so that TOML reads it back as a float.
fn toml_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<tag>_curve.csv`, `<tag>_run<k>.csv` per successful seed and
/// `<tag>_meta.txt` into `dir`.
///
/// `meta` holds extra `key = value` lines whose values are already TOML
/// literals, e.g. the echoed configuration.
pub fn write_results(
    dir: &Path,
    tag: &str,
    runs: &ManyRuns,
    meta: &[(String, String)],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let mut curve = String::from("round,mean_cum_regret,stderr\n");
    for (t, (m, s)) in runs
        .aggregate
        .mean
        .iter()
        .zip(&runs.aggregate.stderr)
        .enumerate()
    {
        let _ = writeln!(curve, "{},{m},{s}", t + 1);
    }
    let path = dir.join(format!("{tag}_curve.csv"));
    write_file(&path, &curve)?;
    written.push(path);

    for (k, r) in runs.records.iter().enumerate() {
        let mut out =
            String::from("round,chosen,reward,expected,regret,cum_regret,select_secs,update_secs,select_factorizations\n");
        for t in 0..r.rounds() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                t + 1,
                r.chosen[t],
                r.reward[t],
                r.expected[t],
                r.regret[t],
                r.cumulative[t],
                r.select_secs[t],
                r.update_secs[t],
                r.select_factorizations[t]
            );
        }
        let path = dir.join(format!("{tag}_run{k}.csv"));
        write_file(&path, &out)?;
        written.push(path);
    }

    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    line("meta.tag", toml_string(tag));
    line("meta.version", toml_string(env!("CARGO_PKG_VERSION")));
    line(
        "meta.fingerprint",
        toml_string(runs.records[0].fingerprint.as_str()),
    );
    let list =
        |xs: &mut dyn Iterator<Item = String>| format!("[{}]", xs.collect::<Vec<_>>().join(", "));
    line(
        "meta.seeds",
        list(&mut runs.seeds.iter().map(u64::to_string)),
    );
    line(
        "meta.succeeded",
        list(&mut runs.records.iter().map(|r| r.seed.to_string())),
    );
    line(
        "meta.failures",
        list(
            &mut runs
                .failures
                .iter()
                .map(|(s, e)| toml_string(&format!("seed {s}: {e}"))),
        ),
    );
    line("meta.repeats", runs.aggregate.n.to_string());
    line("meta.rounds", runs.aggregate.mean.len().to_string());
    line("meta.wall_secs", toml_float(runs.wall_secs));
    line(
        "meta.select_secs",
        list(
            &mut runs
                .records
                .iter()
                .map(|r| toml_float(r.total_select_secs())),
        ),
    );
    line(
        "meta.update_secs",
        list(
            &mut runs
                .records
                .iter()
                .map(|r| toml_float(r.total_update_secs())),
        ),
    );
    line(
        "meta.final_mean_regret",
        toml_float(runs.aggregate.final_mean()),
    );
    let warnings: Vec<String> = runs
        .records
        .iter()
        .filter_map(|r| r.truncated.as_deref().map(toml_string))
        .collect();
    line("meta.warnings", format!("[{}]", warnings.join(", ")));
    for (k, _) in &runs.records[0].stats {
        let values = list(&mut runs.records.iter().map(|r| {
            r.stats
                .iter()
                .find(|(key, _)| key == k)
                .map_or_else(|| toml_string(""), |(_, v)| toml_string(v))
        }));
        line(&format!("stats.{k}"), values);
    }
    for (k, v) in meta {
        line(k, v.clone());
    }
    let path = dir.join(format!("{tag}_meta.txt"));
    write_file(&path, &out)?;
    written.push(path);
    Ok(written)
}

/// Reads a `<tag>_curve.csv` back as (mean, stderr).
pub fn read_curve(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut mean = Vec::new();
    let mut stderr = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let parse_error = |message: String| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_error(format!(
                "expected 3 columns, found {}",
                fields.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_error(format!("{s:?}: {e}")))
        };
        mean.push(num(fields[1])?);
        stderr.push(num(fields[2])?);
    }
    Ok((mean, stderr))
}
