//! Arm-selection policies.
//!
//! [`LmcTs`] is Langevin Monte Carlo Thompson sampling over any
//! [`RewardModel`]. The baselines are linear Thompson sampling, LinUCB,
//! ε-greedy (ridge, GLM or network estimates), UCB-GLM, GLM-TSL and a
//! uniform-random policy.
//!
//! Every policy follows the same cycle: [`Policy::select`] on the round's arm
//! set, then [`Policy::update`] with the observed reward. Ties between arms
//! always go to the lowest index.

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::domain::{mahalanobis_with, ArmFeature, ArmSet, FactorCache, History};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, argmax_lowest};
use crate::models::{Link, LossSpec, RewardModel};
use crate::rng::{streams, RngStream};
use crate::sampler::{
    run_epoch, ChainState, GradientMode, LmcSchedule, ScheduleMode, DIVERGENCE_THRESHOLD,
};

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Chooses an arm index for this round.
    fn select(&mut self, arms: &ArmSet) -> Result<usize>;

    /// Records the reward observed for the arm chosen this round.
    fn update(&mut self, arm: &ArmFeature, reward: f64) -> Result<()>;

    fn history(&self) -> &History;

    /// Counters worth recording next to a run's results.
    fn stats(&self) -> Vec<(&'static str, String)> {
        Vec::new()
    }
}

/// `θ̂ + scale · L⁻ᵀ ζ`, a draw from `N(θ̂, scale² (L Lᵀ)⁻¹)`.
fn gaussian_perturbation(
    center: &DVector<f64>,
    factor: &Cholesky<f64, Dyn>,
    scale: f64,
    rng: &mut RngStream,
) -> DVector<f64> {
    let zeta = rng.normal_vector(center.len());
    if scale == 0.0 {
        return center.clone();
    }
    let noise = factor
        .l_dirty()
        .tr_solve_lower_triangular(&zeta)
        .expect("cholesky factor has a positive diagonal");
    center + noise * scale
}

fn check_arms(history: &History, arms: &ArmSet) -> Result<()> {
    check_dim(history.dim(), arms.dim())
}

fn linear_scores<'a>(arms: &'a ArmSet, theta: &'a DVector<f64>) -> impl Iterator<Item = f64> + 'a {
    arms.iter().map(move |x| x.dot(theta))
}

/// `c · sqrt(d · log t)`, the confidence width used by the UCB policies.
pub fn ucb_width(c: f64, dim: usize, round: usize) -> f64 {
    c * (dim as f64 * (round.max(1) as f64).ln()).sqrt()
}

/// Langevin Monte Carlo Thompson sampling.
///
/// Each selection runs one epoch of Langevin steps on the current loss,
/// warm-started from the previous round's final iterate, and acts greedily
/// on the resulting parameter. No d×d factorization is performed.
#[derive(Debug)]
pub struct LmcTs {
    model: RewardModel,
    loss_lambda: f64,
    history: History,
    chain: ChainState,
    schedule: ScheduleMode,
    gradient: GradientMode,
    rng: RngStream,
    last_schedule: Option<LmcSchedule>,
}

impl LmcTs {
    pub fn new(
        model: RewardModel,
        lambda: f64,
        schedule: ScheduleMode,
        gradient: GradientMode,
        seed: u64,
    ) -> Result<Self> {
        let history = History::new(lambda, model.input_dim())?;
        let mut init_rng = RngStream::new(seed, streams::MODEL_INIT);
        let chain = ChainState::new(model.initial_params(&mut init_rng));
        Ok(Self {
            model,
            loss_lambda: lambda,
            history,
            chain,
            schedule,
            gradient,
            rng: RngStream::new(seed, streams::AGENT),
            last_schedule: None,
        })
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    pub fn model(&self) -> &RewardModel {
        &self.model
    }

    pub fn last_schedule(&self) -> Option<&LmcSchedule> {
        self.last_schedule.as_ref()
    }

    /// Replaces the chain position, e.g. to start from a chosen θ₁,₀.
    pub fn set_chain(&mut self, chain: ChainState) -> Result<()> {
        check_dim(self.model.param_dim(), chain.theta.len())?;
        self.chain = chain;
        Ok(())
    }
}

impl Policy for LmcTs {
    fn name(&self) -> &'static str {
        "lmcts"
    }

    fn select(&mut self, arms: &ArmSet) -> Result<usize> {
        check_arms(&self.history, arms)?;
        let round = self.history.round() + 1;
        let schedule = self.schedule.for_round(round, self.history.gram())?;
        let spec = LossSpec::new(&self.model, self.loss_lambda, &self.history)?;
        self.chain = run_epoch(&self.chain, &spec, &schedule, self.gradient, &mut self.rng)?;
        self.last_schedule = Some(schedule);
        let scores = self
            .model
            .predict_many(arms.iter().map(|x| x.vector()), &self.chain.theta)?;
        Ok(argmax_lowest(scores))
    }

    fn update(&mut self, arm: &ArmFeature, reward: f64) -> Result<()> {
        self.history.observe(arm, reward)
    }

    fn history(&self) -> &History {
        &self.history
    }
}

/// Linear Thompson sampling: `θ̃ = θ̂ + sqrt(v) V^{-1/2} ζ` with a constant
/// `v = (c sqrt(d log T))²`.
#[derive(Debug)]
pub struct LinTs {
    c: f64,
    horizon: usize,
    history: History,
    cache: FactorCache,
    rng: RngStream,
}

impl LinTs {
    pub fn new(
        dim: usize,
        lambda: f64,
        c: f64,
        horizon: usize,
        cache: bool,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            c,
            horizon,
            history: History::new(lambda, dim)?,
            cache: FactorCache::new(cache),
            rng: RngStream::new(seed, streams::AGENT),
        })
    }

    pub fn variance(&self) -> f64 {
        let width = self.c * (self.history.dim() as f64 * (self.horizon.max(1) as f64).ln()).sqrt();
        width * width
    }

    /// One posterior draw `θ̃` for the current history.
    pub fn sample_parameter(&mut self) -> Result<DVector<f64>> {
        let scale = self.variance().sqrt();
        let factor = self.cache.get(&self.history)?;
        let center = self.history.ridge_solution_with(factor)?;
        Ok(gaussian_perturbation(&center, factor, scale, &mut self.rng))
    }
}

impl Policy for LinTs {
    fn name(&self) -> &'static str {
        "lints"
    }

    fn select(&mut self, arms: &ArmSet) -> Result<usize> {
        check_arms(&self.history, arms)?;
        let theta = self.sample_parameter()?;
        Ok(argmax_lowest(linear_scores(arms, &theta)))
    }

    fn update(&mut self, arm: &ArmFeature, reward: f64) -> Result<()> {
        self.cache.invalidate();
        self.history.observe(arm, reward)
    }

    fn history(&self) -> &History {
        &self.history
    }
}

/// LinUCB with width `ν_t = c sqrt(d log t)`.
#[derive(Debug)]
pub struct LinUcb {
    c: f64,
    history: History,
    cache: FactorCache,
}

impl LinUcb {
    pub fn new(dim: usize, lambda: f64, c: f64, cache: bool) -> Result<Self> {
        Self::with_history(History::new(lambda, dim)?, c, cache)
    }

    pub fn with_history(history: History, c: f64, cache: bool) -> Result<Self> {
        Ok(Self {
            c,
            history,
            cache: FactorCache::new(cache),
        })
    }

    pub fn scores(&mut self, arms: &ArmSet) -> Result<Vec<f64>> {
        check_arms(&self.history, arms)?;
        let width = ucb_width(self.c, self.history.dim(), self.history.round() + 1);
        let factor = self.cache.get(&self.history)?;
        let theta = self.history.ridge_solution_with(factor)?;
        Ok(arms
            .iter()
            .map(|x| x.dot(&theta) + width * mahalanobis_with(factor, x.vector()))
            .collect())
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &'static str {
        "linucb"
    }

    fn select(&mut self, arms: &ArmSet) -> Result<usize> {
        Ok(argmax_lowest(self.scores(arms)?))
    }

    fn update(&mut self, arm: &ArmFeature, reward: f64) -> Result<()> {
        self.cache.invalidate();
        self.history.observe(arm, reward)
    }

    fn history(&self) -> &History {
        &self.history
    }
}

/// Tolerance on `‖∇L‖` for the per-round MLE of the GLM policies.
pub const MLE_TOL: f64 = 1e-6;

/// Warm-started, iteration-capped MLE of a GLM loss.
#[derive(Debug, Clone)]
struct GlmEstimate {
    model: RewardModel,
    loss_lambda: f64,
    theta: DVector<f64>,
    max_iters: usize,
    unconverged: usize,
}

impl GlmEstimate {
    fn new(dim: usize, link: Link, loss_lambda: f64, max_iters: usize) -> Self {
        Self {
            model: RewardModel::glm(dim, link),
            loss_lambda,
            theta: DVector::zeros(dim),
            max_iters,
            unconverged: 0,
        }
    }

    fn link(&self) -> Link {
        match &self.model {
            RewardModel::Glm(m) => m.link,
            _ => unreachable!("GLM estimate always holds a GLM model"),
        }
    }

    fn refresh(&mut self, history: &History) -> Result<&DVector<f64>> {
        let spec = LossSpec::new(&self.model, self.loss_lambda, history)?;
        let fit = spec.minimize(&self.theta, self.max_iters, MLE_TOL)?;
        if !fit.converged {
            self.unconverged += 1;
        }
        self.theta = fit.theta;
        Ok(&self.theta)
    }

    fn hessian(&self, history: &History) -> Result<nalgebra::DMatrix<f64>> {
        LossSpec::new(&self.model, self.loss_lambda, history)?.hessian(&self.theta)
    }
}

/// UCB-GLM: `argmax xᵀθ̂ + ν_t ‖x‖_{V⁻¹}` with the GLM maximum-likelihood
/// estimate θ̂ and `ν_t = c sqrt(d log t)`.
#[derive(Debug)]
pub struct UcbGlm {
    c: f64,
    history: History,
    estimate: GlmEstimate,
    cache: FactorCache,
}

impl UcbGlm {
    pub fn new(
        dim: usize,
        link: Link,
        lambda: f64,
        loss_lambda: f64,
        c: f64,
        max_iters: usize,
        cache: bool,
    ) -> Result<Self> {
        Self::with_history(
            History::new(lambda, dim)?,
            link,
            loss_lambda,
            c,
            max_iters,
            cache,
        )
    }

    pub fn with_history(
        history: History,
        link: Link,
        loss_lambda: f64,
        c: f64,
        max_iters: usize,
        cache: bool,
    ) -> Result<Self> {
        let dim = history.dim();
        Ok(Self {
            c,
            history,
            estimate: GlmEstimate::new(dim, link, loss_lambda, max_iters),
            cache: FactorCache::new(cache),
        })
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.estimate.theta
    }
}

impl Policy for UcbGlm {
    fn name(&self) -> &'static str {
        "ucb-glm"
    }

    fn select(&mut self, arms: &ArmSet) -> Result<usize> {
        check_arms(&self.history, arms)?;
        let theta = self.estimate.refresh(&self.history)?.clone();
        let width = ucb_width(self.c, self.history.dim(), self.history.round() + 1);
        let factor = self.cache.get(&self.history)?;
        Ok(argmax_lowest(arms.iter().map(|x| {
            x.dot(&theta) + width * mahalanobis_with(factor, x.vector())
        })))
    }

    fn update(&mut self, arm: &ArmFeature, reward: f64) -> Result<()> {
        self.cache.invalidate();
        self.history.observe(arm, reward)
    }

    fn history(&self) -> &History {
        &self.history
    }

    fn stats(&self) -> Vec<(&'static str, String)> {
        vec![(
            "mle_unconverged_rounds",
            self.estimate.unconverged.to_string(),
        )]
    }
}

/// GLM-TSL: samples `θ̃ ~ N(θ̂, a² (∇²L(θ̂))⁻¹)` around the MLE and plays
/// `argmax μ(xᵀθ̃)`.
#[derive(Debug)]
pub struct GlmTsl {
    a: f64,
    history: History,
    estimate: GlmEstimate,
    rng: RngStream,
}

impl GlmTsl {
    pub fn new(
        dim: usize,
        link: Link,
        lambda: f64,
        loss_lambda: f64,
        a: f64,
        max_iters: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::with_history(
            History::new(lambda, dim)?,
            link,
            loss_lambda,
            a,
            max_iters,
            seed,
        )
    }

    pub fn with_history(
        history: History,
        link: Link,
        loss_lambda: f64,
        a: f64,
        max_iters: usize,
        seed: u64,
    ) -> Result<Self> {
        let dim = history.dim();
        Ok(Self {
            a,
            history,
            estimate: GlmEstimate::new(dim, link, loss_lambda, max_iters),
            rng: RngStream::new(seed, streams::AGENT),
        })
    }

    /// Refreshes the MLE and draws one parameter from the Laplace law.
    pub fn sample_parameter(&mut self) -> Result<DVector<f64>> {
        let center = self.estimate.refresh(&self.history)?.clone();
        let hessian = self.estimate.hessian(&self.history)?;
        let factor = linalg::cholesky(&hessian)?;
        Ok(gaussian_perturbation(
            &center,
            &factor,
            self.a,
            &mut self.rng,
        ))
    }
}

impl Policy for GlmTsl {
    fn name(&self) -> &'static str {
        "glm-tsl"
    }

    fn select(&mut self, arms: &ArmSet) -> Result<usize> {
        check_arms(&self.history, arms)?;
        let theta = self.sample_parameter()?;
        let link = self.estimate.link();
        Ok(argmax_lowest(arms.iter().map(|x| link.mean(x.dot(&theta)))))
    }

    fn update(&mut self, arm: &ArmFeature, reward: f64) -> Result<()> {
        self.history.observe(arm, reward)
    }

    fn history(&self) -> &History {
        &self.history
    }

    fn stats(&self) -> Vec<(&'static str, String)> {
        vec![(
            "mle_unconverged_rounds",
            self.estimate.unconverged.to_string(),
        )]
    }
}

/// Gradient descent on a network's squared loss, `steps` iterations with
/// step size `lr / max(n, 1)` for `n` observations.
pub fn train_network(
    model: &RewardModel,
    lambda: f64,
    history: &History,
    params: &DVector<f64>,
    steps: usize,
    lr: f64,
    gradient: GradientMode,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    if !matches!(model, RewardModel::Mlp(_)) {
        return Err(Error::Unsupported(
            "network training needs a network model".into(),
        ));
    }
    if !(lr > 0.0) {
        return Err(Error::invalid(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let spec = LossSpec::new(model, lambda, history)?;
    let n = history.round();
    let step = lr / n.max(1) as f64;
    let mut theta = params.clone();
    for k in 1..=steps {
        let grad = match gradient {
            GradientMode::MiniBatch(m) if m < n => {
                spec.gradient_subset(&theta, &rng.sample_indices(n, m))?
            }
            _ => spec.gradient(&theta)?,
        };
        theta.axpy(-step, &grad, 1.0);
        if theta.iter().any(|v| !(v.abs() <= DIVERGENCE_THRESHOLD)) {
            return Err(Error::Divergence {
                round: n + 1,
                inner: k,
                step_size: step,
                lambda_max: None,
            });
        }
    }
    Ok(theta)
}

/// Point estimate used by ε-greedy.
#[derive(Debug, Clone)]
pub enum Estimator {
    Ridge,
    Glm {
        link: Link,
        loss_lambda: f64,
        max_iters: usize,
    },
    Network {
        model: RewardModel,
        steps: usize,
        lr: f64,
        gradient: GradientMode,
    },
}

#[derive(Debug, Clone)]
enum EstimatorState {
    Ridge,
    Glm(GlmEstimate),
    Network {
        model: RewardModel,
        params: DVector<f64>,
        steps: usize,
        lr: f64,
        gradient: GradientMode,
    },
}

/// ε-greedy with exploration probability `min(1, c/√t)`.
#[derive(Debug)]
pub struct EpsGreedy {
    c: f64,
    history: History,
    estimator: EstimatorState,
    rng: RngStream,
}

impl EpsGreedy {
    pub fn new(dim: usize, lambda: f64, c: f64, estimator: Estimator, seed: u64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::invalid(format!(
                "exploration constant must be >= 0, got {c}"
            )));
        }
        let estimator = match estimator {
            Estimator::Ridge => EstimatorState::Ridge,
            Estimator::Glm {
                link,
                loss_lambda,
                max_iters,
            } => EstimatorState::Glm(GlmEstimate::new(dim, link, loss_lambda, max_iters)),
            Estimator::Network {
                model,
                steps,
                lr,
                gradient,
            } => {
                check_dim(dim, model.input_dim())?;
                let mut init = RngStream::new(seed, streams::MODEL_INIT);
                EstimatorState::Network {
                    params: model.initial_params(&mut init),
                    model,
                    steps,
                    lr,
                    gradient,
                }
            }
        };
        Ok(Self {
            c,
            history: History::new(lambda, dim)?,
            estimator,
            rng: RngStream::new(seed, streams::AGENT),
        })
    }

    pub fn exploration_probability(&self, round: usize) -> f64 {
        (self.c / (round.max(1) as f64).sqrt()).min(1.0)
    }

    /// Current network parameters, if the estimator is a network.
    pub fn network_params(&self) -> Option<&DVector<f64>> {
        match &self.estimator {
            EstimatorState::Network { params, .. } => Some(params),
            _ => None,
        }
    }

    fn greedy_scores(&mut self, arms: &ArmSet) -> Result<Vec<f64>> {
        match &mut self.estimator {
            EstimatorState::Ridge => {
                let theta = self.history.ridge_solution()?;
                Ok(linear_scores(arms, &theta).collect())
            }
            EstimatorState::Glm(est) => {
                let theta = est.refresh(&self.history)?.clone();
                let link = est.link();
                Ok(arms.iter().map(|x| link.mean(x.dot(&theta))).collect())
            }
            EstimatorState::Network { model, params, .. } => {
                model.predict_many(arms.iter().map(|x| x.vector()), params)
            }
        }
    }
}

impl Policy for EpsGreedy {
    fn name(&self) -> &'static str {
        "eps-greedy"
    }

    fn select(&mut self, arms: &ArmSet) -> Result<usize> {
        check_arms(&self.history, arms)?;
        let p = self.exploration_probability(self.history.round() + 1);
        if p > 0.0 && self.rng.bernoulli(p) {
            return Ok(self.rng.index(arms.len()));
        }
        Ok(argmax_lowest(self.greedy_scores(arms)?))
    }

    fn update(&mut self, arm: &ArmFeature, reward: f64) -> Result<()> {
        self.history.observe(arm, reward)?;
        if let EstimatorState::Network {
            model,
            params,
            steps,
            lr,
            gradient,
        } = &mut self.estimator
        {
            let lambda = self.history.lambda();
            *params = train_network(
                model,
                lambda,
                &self.history,
                params,
                *steps,
                *lr,
                *gradient,
                &mut self.rng,
            )?;
        }
        Ok(())
    }

    fn history(&self) -> &History {
        &self.history
    }

    fn stats(&self) -> Vec<(&'static str, String)> {
        match &self.estimator {
            EstimatorState::Glm(est) => {
                vec![("mle_unconverged_rounds", est.unconverged.to_string())]
            }
            _ => Vec::new(),
        }
    }
}

/// Uniformly random arm every round.
#[derive(Debug)]
pub struct Uniform {
    history: History,
    rng: RngStream,
}

impl Uniform {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            history: History::new(1.0, dim)?,
            rng: RngStream::new(seed, streams::AGENT),
        })
    }
}

impl Policy for Uniform {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn select(&mut self, arms: &ArmSet) -> Result<usize> {
        check_arms(&self.history, arms)?;
        Ok(self.rng.index(arms.len()))
    }

    fn update(&mut self, arm: &ArmFeature, reward: f64) -> Result<()> {
        self.history.observe(arm, reward)
    }

    fn history(&self) -> &History {
        &self.history
    }
}

fn default_lambda() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_hidden() -> Vec<usize> {
    vec![20, 20, 20]
}

fn default_slope() -> f64 {
    0.01
}

fn default_epoch_length() -> usize {
    100
}

fn default_mle_iters() -> usize {
    50
}

fn default_steps() -> usize {
    100
}

fn default_lr() -> f64 {
    0.01
}

fn default_link() -> Link {
    Link::Logistic
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Practical
}

/// Reward model choice in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Practical,
    Theory,
}

/// Policy configuration, one variant per policy.
///
/// `lambda` is the ridge regularization of the gram matrix `V` (default 1).
/// GLM policies regularize their likelihood with `loss_lambda`, defaulting
/// to `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentConfig {
    Lmcts {
        #[serde(default = "default_lambda")]
        lambda: f64,
        model: ModelKind,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_slope")]
        slope: f64,
        #[serde(default = "default_schedule")]
        schedule: ScheduleKind,
        #[serde(default)]
        eta0: Option<f64>,
        #[serde(default)]
        inv_beta: Option<f64>,
        #[serde(default = "default_epoch_length")]
        epoch_length: usize,
        /// Sub-Gaussian noise bound R for the theory schedule.
        #[serde(default)]
        noise_bound: Option<f64>,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        batch_size: Option<usize>,
    },
    Lints {
        #[serde(default = "default_lambda")]
        lambda: f64,
        c: f64,
        #[serde(default = "default_true")]
        cache: bool,
    },
    Linucb {
        #[serde(default = "default_lambda")]
        lambda: f64,
        c: f64,
        #[serde(default = "default_true")]
        cache: bool,
    },
    EpsGreedy {
        #[serde(default = "default_lambda")]
        lambda: f64,
        c: f64,
        model: ModelKind,
        #[serde(default)]
        loss_lambda: Option<f64>,
        #[serde(default = "default_mle_iters")]
        mle_iters: usize,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_slope")]
        slope: f64,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default)]
        batch_size: Option<usize>,
    },
    UcbGlm {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        loss_lambda: Option<f64>,
        c: f64,
        #[serde(default = "default_link")]
        link: Link,
        #[serde(default = "default_mle_iters")]
        mle_iters: usize,
        #[serde(default = "default_true")]
        cache: bool,
    },
    GlmTsl {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        loss_lambda: Option<f64>,
        a: f64,
        #[serde(default = "default_link")]
        link: Link,
        #[serde(default = "default_mle_iters")]
        mle_iters: usize,
    },
    Uniform {},
}

fn require(value: Option<f64>, key: &str) -> Result<f64> {
    value.ok_or_else(|| Error::invalid(format!("agent.{key} is required")))
}

fn positive(value: f64, key: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::invalid(format!(
            "agent.{key} must be > 0, got {value}"
        )))
    }
}

fn nonnegative(value: f64, key: &str) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::invalid(format!(
            "agent.{key} must be >= 0, got {value}"
        )))
    }
}

fn gradient_mode(batch: Option<usize>) -> Result<GradientMode> {
    match batch {
        None => Ok(GradientMode::Full),
        Some(0) => Err(Error::invalid("agent.batch_size must be >= 1")),
        Some(m) => Ok(GradientMode::MiniBatch(m)),
    }
}

impl AgentConfig {
    pub fn variant(&self) -> &'static str {
        match self {
            AgentConfig::Lmcts { .. } => "lmcts",
            AgentConfig::Lints { .. } => "lints",
            AgentConfig::Linucb { .. } => "linucb",
            AgentConfig::EpsGreedy { .. } => "eps-greedy",
            AgentConfig::UcbGlm { .. } => "ucb-glm",
            AgentConfig::GlmTsl { .. } => "glm-tsl",
            AgentConfig::Uniform {} => "uniform",
        }
    }

    /// Checks every hyperparameter without building anything.
    pub fn validate(&self, dim: usize, horizon: usize) -> Result<()> {
        self.build(dim, horizon, 0).map(|_| ())
    }

    /// Instantiates the policy for feature dimension `dim` and horizon `T`.
    pub fn build(&self, dim: usize, horizon: usize, seed: u64) -> Result<Box<dyn Policy>> {
        let model_for = |kind: ModelKind, hidden: &[usize], slope: f64| -> Result<RewardModel> {
            match kind {
                ModelKind::Linear => Ok(RewardModel::linear(dim)),
                ModelKind::Logistic => Ok(RewardModel::glm(dim, Link::Logistic)),
                ModelKind::Mlp => RewardModel::mlp(dim, hidden, slope),
            }
        };
        Ok(match self {
            AgentConfig::Lmcts {
                lambda,
                model,
                hidden,
                slope,
                schedule,
                eta0,
                inv_beta,
                epoch_length,
                noise_bound,
                delta,
                batch_size,
            } => {
                let lambda = positive(*lambda, "lambda")?;
                let mode = match schedule {
                    ScheduleKind::Practical => ScheduleMode::Practical {
                        eta0: positive(require(*eta0, "eta0")?, "eta0")?,
                        inv_beta: nonnegative(require(*inv_beta, "inv_beta")?, "inv_beta")?,
                        epoch_length: *epoch_length,
                    },
                    ScheduleKind::Theory => ScheduleMode::Theory {
                        noise_bound: positive(
                            require(*noise_bound, "noise_bound")?,
                            "noise_bound",
                        )?,
                        delta: positive(require(*delta, "delta")?, "delta")?,
                        horizon,
                    },
                };
                Box::new(LmcTs::new(
                    model_for(*model, hidden, *slope)?,
                    lambda,
                    mode,
                    gradient_mode(*batch_size)?,
                    seed,
                )?)
            }
            AgentConfig::Lints { lambda, c, cache } => Box::new(LinTs::new(
                dim,
                positive(*lambda, "lambda")?,
                nonnegative(*c, "c")?,
                horizon,
                *cache,
                seed,
            )?),
            AgentConfig::Linucb { lambda, c, cache } => Box::new(LinUcb::new(
                dim,
                positive(*lambda, "lambda")?,
                nonnegative(*c, "c")?,
                *cache,
            )?),
            AgentConfig::EpsGreedy {
                lambda,
                c,
                model,
                loss_lambda,
                mle_iters,
                hidden,
                slope,
                steps,
                lr,
                batch_size,
            } => {
                let lambda = positive(*lambda, "lambda")?;
                let estimator = match model {
                    ModelKind::Linear => Estimator::Ridge,
                    ModelKind::Logistic => Estimator::Glm {
                        link: Link::Logistic,
                        loss_lambda: nonnegative(loss_lambda.unwrap_or(lambda), "loss_lambda")?,
                        max_iters: *mle_iters,
                    },
                    ModelKind::Mlp => Estimator::Network {
                        model: model_for(ModelKind::Mlp, hidden, *slope)?,
                        steps: *steps,
                        lr: positive(*lr, "lr")?,
                        gradient: gradient_mode(*batch_size)?,
                    },
                };
                Box::new(EpsGreedy::new(
                    dim,
                    lambda,
                    nonnegative(*c, "c")?,
                    estimator,
                    seed,
                )?)
            }
            AgentConfig::UcbGlm {
                lambda,
                loss_lambda,
                c,
                link,
                mle_iters,
                cache,
            } => {
                let lambda = positive(*lambda, "lambda")?;
                Box::new(UcbGlm::new(
                    dim,
                    *link,
                    lambda,
                    positive(loss_lambda.unwrap_or(lambda), "loss_lambda")?,
                    nonnegative(*c, "c")?,
                    *mle_iters,
                    *cache,
                )?)
            }
            AgentConfig::GlmTsl {
                lambda,
                loss_lambda,
                a,
                link,
                mle_iters,
            } => {
                let lambda = positive(*lambda, "lambda")?;
                Box::new(GlmTsl::new(
                    dim,
                    *link,
                    lambda,
                    positive(loss_lambda.unwrap_or(lambda), "loss_lambda")?,
                    nonnegative(*a, "a")?,
                    *mle_iters,
                    seed,
                )?)
            }
            AgentConfig::Uniform {} => Box::new(Uniform::new(dim, seed)?),
        })
    }
}
