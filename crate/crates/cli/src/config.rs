//! Experiment configuration files.
//!
//! A config is TOML with the sections `[env]`, `[agent]`, `[run]`, and
//! optionally `[grid]` (sweeps) or `[diagnose]` (sampler checks). Unknown
//! keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lmcts::agents::AgentConfig;
use lmcts::envs::EnvConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

fn default_tag() -> String {
    "run".into()
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: usize,
    /// Explicit seeds; when absent, `0..repeats`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Prefix of every output file name.
    #[serde(default = "default_tag")]
    pub tag: String,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn seeds(&self, offset: u64) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.iter().map(|s| s + offset).collect(),
            None => (0..self.repeats as u64).map(|s| s + offset).collect(),
        }
    }
}

fn default_chains() -> usize {
    100_000
}

fn default_threshold() -> f64 {
    4.0
}

fn default_step_fraction() -> f64 {
    0.25
}

fn default_mismatch_factor() -> f64 {
    0.5
}

/// Sampler check against the exact Gaussian law of linear LMC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub dim: usize,
    /// Number of epochs `t`; the history for epoch `i` holds `i − 1` random
    /// unit-arm observations.
    pub rounds: usize,
    #[serde(default = "one")]
    pub lambda: f64,
    /// Step size as a fraction of `1 / λ_max(V_i)`.
    #[serde(default = "default_step_fraction")]
    pub step_fraction: f64,
    pub beta: f64,
    pub epoch_length: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
    /// Give the exact law a wrong step size (negative control).
    #[serde(default)]
    pub mismatch: bool,
    /// Factor applied to the oracle's step size under `mismatch`.
    #[serde(default = "default_mismatch_factor")]
    pub mismatch_factor: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub env: Option<EnvConfig>,
    #[serde(default)]
    pub agent: Option<AgentConfig>,
    #[serde(default)]
    pub run: Option<RunConfig>,
    /// Lists of values per key. Bare keys address `[agent]`; `env.` and
    /// `run.` prefixes address the other sections.
    #[serde(default)]
    pub grid: Option<BTreeMap<String, Vec<Value>>>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file. Relative dataset paths are resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(EnvConfig::Dataset { path: data, .. }) = &mut config.env {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                *data = base.join(&*data);
            }
        }
        Ok(config)
    }

    pub fn require_env(&self) -> Result<&EnvConfig, CliError> {
        self.env
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [env] section".into()))
    }

    pub fn require_agent(&self) -> Result<&AgentConfig, CliError> {
        self.agent
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [agent] section".into()))
    }

    pub fn require_run(&self) -> Result<&RunConfig, CliError> {
        let run = self
            .run
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [run] section".into()))?;
        if run.horizon == 0 {
            return Err(CliError::Config("run.horizon must be >= 1".into()));
        }
        if run.seeds.as_ref().map_or(run.repeats == 0, Vec::is_empty) {
            return Err(CliError::Config("run needs at least one seed".into()));
        }
        if run.tag.is_empty()
            || !run
                .tag
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            || run.tag.starts_with('.')
        {
            return Err(CliError::Config(format!(
                "run.tag {:?} must be non-empty and use only letters, digits, '-', '_' and '.'",
                run.tag
            )));
        }
        Ok(run)
    }

    /// Expands `[grid]` into one config per cell, in row-major order over
    /// the sorted keys, together with each cell's assignments.
    pub fn grid_cells(&self) -> Result<Vec<(Vec<(String, Value)>, ExperimentConfig)>, CliError> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Config("sweep needs a [grid] section".into()))?;
        if grid.is_empty() || grid.values().any(Vec::is_empty) {
            return Err(CliError::Config("grid is empty".into()));
        }
        let keys: Vec<&String> = grid.keys().collect();
        let sizes: Vec<usize> = keys.iter().map(|k| grid[*k].len()).collect();
        let total: usize = sizes.iter().product();
        let base = self.sections()?;
        let mut cells = Vec::with_capacity(total);
        for cell in 0..total {
            let mut rest = cell;
            let mut assignment = Vec::with_capacity(keys.len());
            let mut table = base.clone();
            for (i, key) in keys.iter().enumerate().rev() {
                let value = grid[*key][rest % sizes[i]].clone();
                rest /= sizes[i];
                let (section, field) = match key.split_once('.') {
                    Some((s @ ("env" | "run" | "agent"), f)) => (s, f),
                    Some(_) => {
                        return Err(CliError::Config(format!(
                            "grid key {key:?} names an unknown section"
                        )))
                    }
                    None => ("agent", key.as_str()),
                };
                let target = table
                    .get_mut(section)
                    .and_then(Value::as_table_mut)
                    .ok_or_else(|| {
                        CliError::Config(format!("grid key {key:?} needs a [{section}] section"))
                    })?;
                target.insert(field.to_string(), value.clone());
                assignment.push((key.to_string(), value));
            }
            assignment.reverse();
            let mut config: ExperimentConfig = Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| CliError::Config(format!("grid cell {cell}: {e}")))?;
            config.grid = None;
            cells.push((assignment, config));
        }
        Ok(cells)
    }

    /// The `env`, `agent` and `run` sections as a TOML table.
    pub fn sections(&self) -> Result<Table, CliError> {
        let mut table = Table::new();
        let mut put =
            |name: &str, value: Result<Value, toml::ser::Error>| -> Result<(), CliError> {
                let value = value
                    .map_err(|e| CliError::Config(format!("cannot serialize [{name}]: {e}")))?;
                table.insert(name.into(), value);
                Ok(())
            };
        if let Some(env) = &self.env {
            put("env", Value::try_from(env))?;
        }
        if let Some(agent) = &self.agent {
            put("agent", Value::try_from(agent))?;
        }
        if let Some(run) = &self.run {
            put("run", Value::try_from(run))?;
        }
        if let Some(diagnose) = &self.diagnose {
            put("diagnose", Value::try_from(diagnose))?;
        }
        Ok(table)
    }

    /// Every config field as `section.key = literal` pairs, for metadata.
    pub fn flatten(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for (section, value) in self.sections()? {
            if let Value::Table(fields) = value {
                for (k, v) in fields {
                    out.push((format!("{section}.{k}"), render(&v)));
                }
            }
        }
        Ok(out)
    }

    /// Rebuilds the config sections from a metadata document.
    pub fn from_metadata(text: &str) -> Result<Self, CliError> {
        let mut table: Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        table.retain(|k, _| matches!(k, "env" | "agent" | "run" | "diagnose"));
        Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }
}

/// Inline TOML rendering of a value.
pub fn render(value: &Value) -> String {
    match value {
        Value::String(s) => lmcts::harness::toml_string(s),
        Value::Array(items) => format!(
            "[{}]",
            items.iter().map(render).collect::<Vec<_>>().join(", ")
        ),
        Value::Table(t) => format!(
            "{{ {} }}",
            t.iter()
                .map(|(k, v)| format!("{} = {}", lmcts::harness::toml_string(k), render(v)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        other => other.to_string(),
    }
}
