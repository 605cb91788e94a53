//! Langevin Monte Carlo chains over a loss `L_t`.
//!
//! One inner step is
//!
//! ```text
//! θ ← θ − η ∇L(θ) + sqrt(2η/β) ε,   ε ~ N(0, I)
//! ```
//!
//! and an epoch applies `K` such steps, warm-started from the previous
//! round's final iterate. For ridge losses the iterate is exactly Gaussian and
//! [`closed_form_law`] computes its law by the matrix recursions with
//! `A_i = I − 2η_i V_i`; that law is the ground truth the simulated chains are
//! tested against.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::History;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::models::{LossSpec, RewardModel};
use crate::rng::RngStream;

/// Coordinates beyond this magnitude are treated as a diverged chain.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Step size, inverse temperature and epoch length for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmcSchedule {
    pub step_size: f64,
    /// β. `f64::INFINITY` turns the chain into plain gradient descent.
    pub beta: f64,
    pub epoch_length: usize,
}

impl LmcSchedule {
    pub fn new(step_size: f64, beta: f64, epoch_length: usize) -> Result<Self> {
        let s = Self {
            step_size,
            beta,
            epoch_length,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "inverse temperature must be positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// `sqrt(2η/β)`.
    pub fn noise_scale(&self) -> f64 {
        (2.0 * self.step_size / self.beta).sqrt()
    }
}

/// How a round's schedule is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScheduleMode {
    /// `η_t = η₀ / t`, fixed β⁻¹ and K.
    Practical {
        eta0: f64,
        inv_beta: f64,
        epoch_length: usize,
    },
    /// The step size, epoch length and temperature from the regret analysis
    /// of linear LMC-TS; see [`theory_schedule`].
    Theory {
        noise_bound: f64,
        delta: f64,
        horizon: usize,
    },
}

impl ScheduleMode {
    /// Schedule for round `round` (1-based) given the current gram matrix.
    pub fn for_round(&self, round: usize, gram: &DMatrix<f64>) -> Result<LmcSchedule> {
        match *self {
            ScheduleMode::Practical {
                eta0,
                inv_beta,
                epoch_length,
            } => {
                if !(inv_beta >= 0.0) {
                    return Err(Error::InvalidSchedule(format!(
                        "inv_beta must be >= 0, got {inv_beta}"
                    )));
                }
                let beta = if inv_beta == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / inv_beta
                };
                LmcSchedule::new(eta0 / round.max(1) as f64, beta, epoch_length)
            }
            ScheduleMode::Theory {
                noise_bound,
                delta,
                horizon,
            } => theory_schedule(gram, noise_bound, delta, horizon, gram.nrows()),
        }
    }
}

/// Position of a chain: the iterate, the number of completed epochs, and the
/// inner index reached in the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: DVector<f64>,
    pub round: usize,
    pub inner: usize,
}

impl ChainState {
    pub fn new(theta: DVector<f64>) -> Self {
        Self {
            theta,
            round: 0,
            inner: 0,
        }
    }
}

/// Gradient estimator used inside an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Full,
    /// Uniform mini-batch of this size (SGLD), rescaled to be unbiased.
    MiniBatch(usize),
}

/// One Langevin step `θ − η·grad + sqrt(2η/β)·ε`.
pub fn lmc_step(
    theta: &DVector<f64>,
    grad: &DVector<f64>,
    step_size: f64,
    beta: f64,
    noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(theta.len(), grad.len())?;
    check_dim(theta.len(), noise.len())?;
    let schedule = LmcSchedule::new(step_size, beta, 1)?;
    if theta
        .iter()
        .chain(grad.iter())
        .chain(noise.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numerical {
            message: "non-finite input to Langevin step".into(),
            condition: None,
        });
    }
    let mut next = theta - grad * step_size;
    next.axpy(schedule.noise_scale(), noise, 1.0);
    Ok(next)
}

/// Runs one epoch of `K` Langevin steps against `spec`, drawing fresh
/// standard-normal noise for every step from `rng`.
///
/// `state.round` must equal the number of observations in the history (the
/// chain enters round t after t−1 completed epochs).
pub fn run_epoch(
    state: &ChainState,
    spec: &LossSpec<'_>,
    schedule: &LmcSchedule,
    gradient: GradientMode,
    rng: &mut RngStream,
) -> Result<ChainState> {
    schedule.validate()?;
    check_dim(spec.param_dim(), state.theta.len())?;
    if state.round != spec.history.round() {
        return Err(Error::invalid(format!(
            "chain has completed {} epochs but the history holds {} observations",
            state.round,
            spec.history.round()
        )));
    }
    let round = state.round + 1;
    let n = spec.history.round();
    let noise_scale = schedule.noise_scale();
    let mut theta = state.theta.clone();
    for k in 1..=schedule.epoch_length {
        let grad = match gradient {
            GradientMode::MiniBatch(m) if m < n => {
                let batch = rng.sample_indices(n, m);
                spec.gradient_subset(&theta, &batch)?
            }
            _ => spec.gradient(&theta)?,
        };
        theta.axpy(-schedule.step_size, &grad, 1.0);
        if noise_scale > 0.0 {
            for v in theta.iter_mut() {
                *v += noise_scale * rng.standard_normal();
            }
        }
        if theta.iter().any(|v| !(v.abs() <= DIVERGENCE_THRESHOLD)) {
            return Err(Error::Divergence {
                round,
                inner: k,
                step_size: schedule.step_size,
                lambda_max: curvature_estimate(spec),
            });
        }
    }
    Ok(ChainState {
        theta,
        round,
        inner: schedule.epoch_length,
    })
}

/// Largest Hessian eigenvalue for linear and GLM losses (at θ = 0); `None`
/// for networks.
fn curvature_estimate(spec: &LossSpec<'_>) -> Option<f64> {
    if let RewardModel::Mlp(_) = spec.model {
        return None;
    }
    let h = spec.hessian(&DVector::zeros(spec.param_dim())).ok()?;
    Some(linalg::power_iteration(
        &h,
        linalg::POWER_ITERATIONS,
        linalg::POWER_TOL,
    ))
}

/// Multivariate normal law.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Exact law of the final iterate of linear LMC run over `histories[0..t]`
/// with `schedules[0..t]`, started from `start`.
///
/// Round i contributes
///
/// ```text
/// μ ← A^K μ + (I − A^K) θ̂_i
/// Σ ← A^K Σ A^K + (2η/β) Σ_{l<K} A^{2l}
/// ```
///
/// with `A = I − 2ηV_i`. Requires `η_i < 1/(2λ_max(V_i))` so `‖A_i‖ < 1`.
pub fn closed_form_law(
    histories: &[History],
    schedules: &[LmcSchedule],
    start: &DVector<f64>,
) -> Result<GaussianLaw> {
    if histories.len() != schedules.len() {
        return Err(Error::invalid(format!(
            "{} histories but {} schedules",
            histories.len(),
            schedules.len()
        )));
    }
    let d = start.len();
    let mut mean = start.clone();
    let mut cov = DMatrix::zeros(d, d);
    for (i, (h, s)) in histories.iter().zip(schedules).enumerate() {
        check_dim(d, h.dim())?;
        s.validate()?;
        let lambda_max = SymmetricEigen::new(h.gram().clone()).eigenvalues.max();
        if !(s.step_size < 0.5 / lambda_max) {
            return Err(Error::InvalidSchedule(format!(
                "round {}: step size {:.4e} must be below 1/(2 lambda_max) = {:.4e}",
                i + 1,
                s.step_size,
                0.5 / lambda_max
            )));
        }
        let a = DMatrix::identity(d, d) - h.gram() * (2.0 * s.step_size);
        let a_k = linalg::matrix_power(&a, s.epoch_length);
        let ridge = h.ridge_solution()?;
        mean = &a_k * mean + (DMatrix::identity(d, d) - &a_k) * ridge;
        cov = &a_k * cov * &a_k;
        if s.beta.is_finite() {
            let a2 = &a * &a;
            cov += linalg::geometric_sum(&a2, s.epoch_length) * (2.0 * s.step_size / s.beta);
        }
        cov = (&cov + cov.transpose()) * 0.5;
    }
    Ok(GaussianLaw {
        mean,
        covariance: cov,
    })
}

/// Schedule from the regret analysis:
///
/// * `η = 1 / (4 λ_max(V))`
/// * `K = ⌈κ log(3R sqrt(2dT log(T³/δ)))⌉` with `κ = λ_max / λ_min`
/// * `β⁻¹ = 4R sqrt(d log(T³/δ))`
///
/// Eigenvalues come from power iteration, so no factorization is performed.
pub fn theory_schedule(
    gram: &DMatrix<f64>,
    noise_bound: f64,
    delta: f64,
    horizon: usize,
    dim: usize,
) -> Result<LmcSchedule> {
    if !(noise_bound > 0.0) || !(delta > 0.0 && delta < 1.0) || horizon < 2 || dim == 0 {
        return Err(Error::InvalidSchedule(format!(
            "theory schedule needs R > 0, 0 < delta < 1, T >= 2, d >= 1 (got R={noise_bound}, delta={delta}, T={horizon}, d={dim})"
        )));
    }
    let (lambda_min, lambda_max) = linalg::extreme_eigenvalues(gram);
    if !(lambda_min > 0.0 && lambda_max.is_finite()) {
        return Err(Error::Numerical {
            message: format!("gram matrix is degenerate (lambda_min estimate {lambda_min:.3e})"),
            condition: linalg::condition_estimate(gram),
        });
    }
    let kappa = lambda_max / lambda_min;
    let t = horizon as f64;
    let d = dim as f64;
    let log_term = (t.powi(3) / delta).ln();
    let k = (kappa * (3.0 * noise_bound * (2.0 * d * t * log_term).sqrt()).ln()).ceil();
    let inv_beta = 4.0 * noise_bound * (d * log_term).sqrt();
    LmcSchedule::new(0.25 / lambda_max, 1.0 / inv_beta, (k as usize).max(1))
}
