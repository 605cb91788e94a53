//! Bandit environments: synthetic linear, logistic and quadratic rewards,
//! and classification datasets turned into one-arm-per-class bandits.
//!
//! Regret is pseudo-regret, computed from the true expected rewards.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::domain::{ArmFeature, ArmSet};
use crate::error::{check_dim, Error, Result};
use crate::linalg::argmax_lowest;
use crate::models::sigmoid;
use crate::rng::{streams, RngStream};

/// What one pull produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    pub reward: f64,
    pub expected: f64,
    pub best_index: usize,
    pub best_expected: f64,
    /// `best_expected − expected`, never negative.
    pub regret: f64,
}

impl RoundOutcome {
    fn new(reward: f64, expected: f64, best_index: usize, best_expected: f64) -> Self {
        Self {
            reward,
            expected,
            best_index,
            best_expected,
            regret: (best_expected - expected).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    /// `θ*ᵀx + N(0, σ²)`
    Linear,
    /// `Ber(μ(θ*ᵀx))`
    Logistic,
    /// `s·(θ*ᵀx)² + N(0, σ²)`
    Quadratic,
}

impl RewardKind {
    pub fn default_noise_variance(self) -> f64 {
        match self {
            RewardKind::Linear => 0.5,
            RewardKind::Logistic => 0.0,
            RewardKind::Quadratic => 1.0,
        }
    }
}

pub const QUADRATIC_SCALE: f64 = 10.0;

fn unit_arms(rng: &mut RngStream, count: usize, dim: usize) -> ArmSet {
    let arms = (0..count)
        .map(|_| ArmFeature::new(unit_vector(rng, dim)).expect("normalized gaussian is finite"))
        .collect();
    ArmSet::new(arms).expect("arm count and dimension are positive")
}

fn unit_vector(rng: &mut RngStream, dim: usize) -> DVector<f64> {
    loop {
        let v = rng.normal_vector(dim);
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// Synthetic environment with a unit-norm `θ*` and unit-norm arms.
///
/// `θ*` (and a fixed arm set) come from the `THETA_STAR` stream, changing
/// arm sets from `ARMS`, and reward noise from `REWARDS`. Agents never touch
/// these streams, so every agent sees the same arm sequence for a seed.
#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    kind: RewardKind,
    theta_star: DVector<f64>,
    arm_count: usize,
    fixed_arms: Option<ArmSet>,
    noise_sd: f64,
    scale: f64,
    arm_rng: RngStream,
    reward_rng: RngStream,
}

impl SyntheticEnv {
    pub fn new(
        kind: RewardKind,
        dim: usize,
        arm_count: usize,
        changing: bool,
        noise_variance: f64,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || arm_count == 0 {
            return Err(Error::invalid(
                "synthetic environments need dim >= 1 and arms >= 1",
            ));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be >= 0, got {noise_variance}"
            )));
        }
        let mut setup = RngStream::new(seed, streams::THETA_STAR);
        let theta_star = unit_vector(&mut setup, dim);
        let fixed_arms = (!changing).then(|| unit_arms(&mut setup, arm_count, dim));
        Ok(Self {
            kind,
            theta_star,
            arm_count,
            fixed_arms,
            noise_sd: noise_variance.sqrt(),
            scale: QUADRATIC_SCALE,
            arm_rng: RngStream::new(seed, streams::ARMS),
            reward_rng: RngStream::new(seed, streams::REWARDS),
        })
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn is_changing(&self) -> bool {
        self.fixed_arms.is_none()
    }

    pub fn next_arms(&mut self) -> ArmSet {
        match &self.fixed_arms {
            Some(arms) => arms.clone(),
            None => unit_arms(&mut self.arm_rng, self.arm_count, self.theta_star.len()),
        }
    }

    pub fn expected_reward(&self, x: &ArmFeature) -> f64 {
        let z = self.theta_star.dot(x.vector());
        match self.kind {
            RewardKind::Linear => z,
            RewardKind::Logistic => sigmoid(z),
            RewardKind::Quadratic => self.scale * z * z,
        }
    }

    /// Index and expected reward of the best arm, lowest index on ties.
    pub fn oracle_best(&self, arms: &ArmSet) -> (usize, f64) {
        let i = argmax_lowest(arms.iter().map(|x| self.expected_reward(x)));
        (i, self.expected_reward(&arms[i]))
    }

    /// Draws a reward for `arms[index]`.
    pub fn pull(&mut self, arms: &ArmSet, index: usize) -> Result<RoundOutcome> {
        check_dim(self.dim(), arms.dim())?;
        let x = arms.get(index).ok_or_else(|| {
            Error::invalid(format!(
                "arm index {index} out of range for {} arms",
                arms.len()
            ))
        })?;
        let expected = self.expected_reward(x);
        let reward = match self.kind {
            RewardKind::Logistic => f64::from(u8::from(self.reward_rng.bernoulli(expected))),
            _ => expected + self.noise_sd * self.reward_rng.standard_normal(),
        };
        let (best_index, best_expected) = self.oracle_best(arms);
        Ok(RoundOutcome::new(
            reward,
            expected,
            best_index,
            best_expected,
        ))
    }
}

/// Table of a published dataset's shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetSpec {
    pub name: &'static str,
    pub attributes: usize,
    pub classes: usize,
    pub context_dim: usize,
    pub instances: usize,
}

pub const SHUTTLE: DatasetSpec = DatasetSpec {
    name: "shuttle",
    attributes: 9,
    classes: 7,
    context_dim: 63,
    instances: 58_000,
};

pub const MAGIC_TELESCOPE: DatasetSpec = DatasetSpec {
    name: "magic",
    attributes: 10,
    classes: 2,
    context_dim: 20,
    instances: 19_020,
};

/// Listed with context dimension 48, although 22 attributes over 2 arms
/// embed into 44 coordinates. The check uses `attributes · classes`.
pub const MUSHROOM: DatasetSpec = DatasetSpec {
    name: "mushroom",
    attributes: 22,
    classes: 2,
    context_dim: 48,
    instances: 8124,
};

pub const COVERTYPE: DatasetSpec = DatasetSpec {
    name: "covertype",
    attributes: 54,
    classes: 7,
    context_dim: 378,
    instances: 581_012,
};

/// Shape only; image decoding is not supported.
pub const CIFAR10: DatasetSpec = DatasetSpec {
    name: "cifar10",
    attributes: 3 * 32 * 32,
    classes: 10,
    context_dim: 30_720,
    instances: 10_000,
};

/// The bundled three-class toy set in `data/toy3.csv`.
pub const TOY3: DatasetSpec = DatasetSpec {
    name: "toy3",
    attributes: 4,
    classes: 3,
    context_dim: 12,
    instances: 300,
};

pub const KNOWN_DATASETS: [DatasetSpec; 6] =
    [SHUTTLE, MAGIC_TELESCOPE, MUSHROOM, COVERTYPE, CIFAR10, TOY3];

pub fn known_dataset(name: &str) -> Option<DatasetSpec> {
    KNOWN_DATASETS
        .iter()
        .copied()
        .find(|s| s.name.eq_ignore_ascii_case(name))
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

/// How a dataset file is laid out: `d` feature columns, then an integer
/// label in `[label_base, label_base + N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFormat {
    pub delimiter: char,
    pub header: bool,
    pub label_base: usize,
    /// Class count; inferred from the largest label when absent.
    pub classes: Option<usize>,
    /// Min-max scale every feature column to `[0, 1]`.
    pub normalize: bool,
}

impl Default for DatasetFormat {
    fn default() -> Self {
        Self {
            delimiter: ',',
            header: false,
            label_base: 0,
            classes: None,
            normalize: true,
        }
    }
}

/// Labelled instances, shared read-only between runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<DVector<f64>>,
    labels: Vec<usize>,
    classes: usize,
    normalized: bool,
}

impl Dataset {
    pub fn new(features: Vec<DVector<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("dataset has no instances"));
        }
        if features.len() != labels.len() {
            return Err(Error::invalid("feature and label counts differ"));
        }
        let d = features[0].len();
        if d == 0 {
            return Err(Error::invalid("dataset has no feature columns"));
        }
        for f in &features {
            check_dim(d, f.len())?;
        }
        if classes == 0 {
            return Err(Error::invalid("dataset needs at least one class"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
            normalized: false,
        })
    }

    pub fn attributes(&self) -> usize {
        self.features[0].len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn context_dim(&self) -> usize {
        self.attributes() * self.classes
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn instance(&self, i: usize) -> (&DVector<f64>, usize) {
        (&self.features[i], self.labels[i])
    }

    /// Rescales each column to `[0, 1]`; constant columns become 0.
    pub fn normalize(&mut self) {
        let d = self.attributes();
        for j in 0..d {
            let (lo, hi) = self
                .features
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                    (lo.min(f[j]), hi.max(f[j]))
                });
            let span = hi - lo;
            for f in &mut self.features {
                f[j] = if span > 0.0 { (f[j] - lo) / span } else { 0.0 };
            }
        }
        self.normalized = true;
    }

    /// Checks the shape against a published one. The context dimension is
    /// checked as `attributes · classes`.
    pub fn check_spec(&self, spec: &DatasetSpec) -> Result<()> {
        let mismatch = |what: &str, expected: usize, actual: usize| {
            Error::invalid(format!(
                "{}: expected {expected} {what}, found {actual}",
                spec.name
            ))
        };
        if self.attributes() != spec.attributes {
            return Err(mismatch("attributes", spec.attributes, self.attributes()));
        }
        if self.classes != spec.classes {
            return Err(mismatch("classes", spec.classes, self.classes));
        }
        if self.len() != spec.instances {
            return Err(mismatch("instances", spec.instances, self.len()));
        }
        Ok(())
    }

    /// The `N` arms for instance `i`: arm `j` carries the features in block
    /// `j` of an `N·d` vector and zeros elsewhere.
    pub fn arms(&self, i: usize) -> ArmSet {
        let x = &self.features[i];
        let d = x.len();
        let arms = (0..self.classes)
            .map(|j| {
                let mut v = DVector::zeros(d * self.classes);
                v.rows_mut(j * d, d).copy_from(x);
                ArmFeature::new(v).expect("dataset features are finite")
            })
            .collect();
        ArmSet::new(arms).expect("at least one class")
    }
}

/// Reads a delimited dataset file.
pub fn load_dataset(path: &Path, format: &DatasetFormat) -> Result<Dataset> {
    if !format.delimiter.is_ascii() {
        return Err(Error::invalid(format!(
            "delimiter {:?} is not ASCII",
            format.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter as u8)
        .has_headers(format.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let parse_error = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < 2 {
            return Err(parse_error(
                row,
                "need at least one feature and a label".into(),
            ));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_error(
                    row,
                    format!("expected {w} columns, found {}", record.len()),
                ));
            }
            _ => {}
        }
        let n = record.len() - 1;
        let x = record
            .iter()
            .take(n)
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        parse_error(
                            row,
                            format!("column {}: {s:?} is not a finite number", j + 1),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let raw = &record[n];
        let label: usize = raw
            .parse()
            .map_err(|_| parse_error(row, format!("label {raw:?} is not a nonnegative integer")))?;
        let label = label.checked_sub(format.label_base).ok_or_else(|| {
            parse_error(
                row,
                format!("label {label} is below label_base {}", format.label_base),
            )
        })?;
        if let Some(classes) = format.classes {
            if label >= classes {
                return Err(parse_error(
                    row,
                    format!(
                        "label {} out of range for {classes} classes",
                        label + format.label_base
                    ),
                ));
            }
        }
        features.push(DVector::from_vec(x));
        labels.push(label);
    }
    let classes = match format.classes {
        Some(c) => c,
        None => labels.iter().max().map_or(0, |&m| m + 1),
    };
    let mut data = Dataset::new(features, labels, classes)?;
    if format.normalize {
        data.normalize();
    }
    Ok(data)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("{kind:?}"),
        },
    }
}

/// A dataset presented in a seed-dependent shuffled order.
#[derive(Debug, Clone)]
pub struct DatasetEnv {
    data: Arc<Dataset>,
    order: Vec<usize>,
    cursor: usize,
    wrap: bool,
    current_label: Option<usize>,
}

impl DatasetEnv {
    pub fn new(data: Arc<Dataset>, wrap: bool, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..data.len()).collect();
        RngStream::new(seed, streams::SHUFFLE).shuffle(&mut order);
        Self {
            data,
            order,
            cursor: 0,
            wrap,
            current_label: None,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn dim(&self) -> usize {
        self.data.context_dim()
    }

    /// Arms for the next instance and its hidden label.
    pub fn next_round(&mut self) -> Result<(ArmSet, usize)> {
        if self.cursor == self.order.len() {
            if !self.wrap {
                return Err(Error::EndOfData(self.order.len()));
            }
            self.cursor = 0;
        }
        let i = self.order[self.cursor];
        self.cursor += 1;
        let label = self.data.labels[i];
        self.current_label = Some(label);
        Ok((self.data.arms(i), label))
    }

    pub fn pull(&mut self, arms: &ArmSet, index: usize) -> Result<RoundOutcome> {
        let label = self
            .current_label
            .ok_or_else(|| Error::invalid("pull before the first round's arms were drawn"))?;
        if index >= arms.len() {
            return Err(Error::invalid(format!(
                "arm index {index} out of range for {} arms",
                arms.len()
            )));
        }
        let reward = if index == label { 1.0 } else { 0.0 };
        Ok(RoundOutcome::new(reward, reward, label, 1.0))
    }
}

/// Any environment the harness can drive.
#[derive(Debug, Clone)]
pub enum Environment {
    Synthetic(SyntheticEnv),
    Dataset(DatasetEnv),
}

impl Environment {
    pub fn dim(&self) -> usize {
        match self {
            Environment::Synthetic(e) => e.dim(),
            Environment::Dataset(e) => e.dim(),
        }
    }

    /// Rounds the environment can serve, if bounded.
    pub fn max_rounds(&self) -> Option<usize> {
        match self {
            Environment::Dataset(e) if !e.wrap => Some(e.order.len()),
            _ => None,
        }
    }

    pub fn next_arms(&mut self) -> Result<ArmSet> {
        match self {
            Environment::Synthetic(e) => Ok(e.next_arms()),
            Environment::Dataset(e) => e.next_round().map(|(arms, _)| arms),
        }
    }

    pub fn pull(&mut self, arms: &ArmSet, index: usize) -> Result<RoundOutcome> {
        match self {
            Environment::Synthetic(e) => e.pull(arms, index),
            Environment::Dataset(e) => e.pull(arms, index),
        }
    }
}

/// Environment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvConfig {
    Linear {
        dim: usize,
        arms: usize,
        #[serde(default = "default_true")]
        changing: bool,
        #[serde(default)]
        noise_variance: Option<f64>,
    },
    Logistic {
        dim: usize,
        arms: usize,
        #[serde(default)]
        changing: bool,
    },
    Quadratic {
        dim: usize,
        arms: usize,
        #[serde(default = "default_true")]
        changing: bool,
        #[serde(default)]
        noise_variance: Option<f64>,
    },
    Dataset {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default)]
        header: bool,
        #[serde(default)]
        label_base: usize,
        #[serde(default)]
        classes: Option<usize>,
        #[serde(default = "default_true")]
        normalize: bool,
        /// Restart from the first shuffled instance instead of stopping.
        #[serde(default)]
        wrap: bool,
        /// Name of a published dataset whose shape must match.
        #[serde(default)]
        expect: Option<String>,
    },
}

/// A config with any dataset already loaded, ready to build one
/// environment per seed.
#[derive(Debug, Clone)]
pub enum PreparedEnv {
    Synthetic {
        kind: RewardKind,
        dim: usize,
        arms: usize,
        changing: bool,
        noise_variance: f64,
    },
    Dataset {
        data: Arc<Dataset>,
        wrap: bool,
    },
}

impl EnvConfig {
    /// Validates the config and loads any dataset.
    pub fn prepare(&self) -> Result<PreparedEnv> {
        let synthetic =
            |kind: RewardKind, dim: usize, arms: usize, changing: bool, noise: Option<f64>| {
                let noise_variance = noise.unwrap_or(kind.default_noise_variance());
                if dim == 0 || arms == 0 {
                    return Err(Error::invalid("env.dim and env.arms must be >= 1"));
                }
                if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
                    return Err(Error::invalid(format!(
                        "env.noise_variance must be >= 0, got {noise_variance}"
                    )));
                }
                Ok(PreparedEnv::Synthetic {
                    kind,
                    dim,
                    arms,
                    changing,
                    noise_variance,
                })
            };
        match self {
            EnvConfig::Linear {
                dim,
                arms,
                changing,
                noise_variance,
            } => synthetic(RewardKind::Linear, *dim, *arms, *changing, *noise_variance),
            EnvConfig::Logistic {
                dim,
                arms,
                changing,
            } => synthetic(RewardKind::Logistic, *dim, *arms, *changing, None),
            EnvConfig::Quadratic {
                dim,
                arms,
                changing,
                noise_variance,
            } => synthetic(
                RewardKind::Quadratic,
                *dim,
                *arms,
                *changing,
                *noise_variance,
            ),
            EnvConfig::Dataset {
                path,
                delimiter,
                header,
                label_base,
                classes,
                normalize,
                wrap,
                expect,
            } => {
                let format = DatasetFormat {
                    delimiter: *delimiter,
                    header: *header,
                    label_base: *label_base,
                    classes: *classes,
                    normalize: *normalize,
                };
                let data = load_dataset(path, &format)?;
                if let Some(name) = expect {
                    let spec = known_dataset(name)
                        .ok_or_else(|| Error::invalid(format!("unknown dataset {name:?}")))?;
                    data.check_spec(&spec)?;
                }
                Ok(PreparedEnv::Dataset {
                    data: Arc::new(data),
                    wrap: *wrap,
                })
            }
        }
    }
}

impl PreparedEnv {
    pub fn dim(&self) -> usize {
        match self {
            PreparedEnv::Synthetic { dim, .. } => *dim,
            PreparedEnv::Dataset { data, .. } => data.context_dim(),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Environment> {
        Ok(match self {
            PreparedEnv::Synthetic {
                kind,
                dim,
                arms,
                changing,
                noise_variance,
            } => Environment::Synthetic(SyntheticEnv::new(
                *kind,
                *dim,
                *arms,
                *changing,
                *noise_variance,
                seed,
            )?),
            PreparedEnv::Dataset { data, wrap } => {
                Environment::Dataset(DatasetEnv::new(Arc::clone(data), *wrap, seed))
            }
        })
    }
}
