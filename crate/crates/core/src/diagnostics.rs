//! Moment checks of simulated Langevin chains against the exact Gaussian law
//! of the linear case.

use nalgebra::{DMatrix, DVector};

use crate::domain::{ArmFeature, History};
use crate::error::{Error, Result};
use crate::models::{LossSpec, RewardModel};
use crate::rng::{streams, RngStream};
use crate::sampler::{
    closed_form_law, run_epoch, ChainState, GaussianLaw, GradientMode, LmcSchedule,
};

/// Histories `H_1, …, H_t` of a linear bandit with random unit arms, where
/// `H_i` holds the first `i − 1` observations. Rewards are `θ*ᵀx + N(0, 0.5)`
/// with a random unit `θ*`.
pub fn random_linear_histories(
    dim: usize,
    rounds: usize,
    lambda: f64,
    seed: u64,
) -> Result<Vec<History>> {
    let mut rng = RngStream::new(seed, streams::HISTORY);
    let theta_star = rng.normal_vector(dim).normalize();
    let mut h = History::new(lambda, dim)?;
    let mut out = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        out.push(h.clone());
        let x = rng.normal_vector(dim).normalize();
        let r = x.dot(&theta_star) + 0.5f64.sqrt() * rng.standard_normal();
        h.observe(&ArmFeature::new(x)?, r)?;
    }
    Ok(out)
}

/// Simulates `chains` independent linear LMC chains from `start` through the
/// given rounds and returns their final iterates. Chain `i` draws from stream
/// `streams::CHAINS + i` of `seed`.
pub fn simulate_chains(
    histories: &[History],
    schedules: &[LmcSchedule],
    start: &DVector<f64>,
    chains: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if histories.len() != schedules.len() {
        return Err(Error::invalid("histories and schedules differ in length"));
    }
    let model = RewardModel::linear(start.len());
    let specs = histories
        .iter()
        .map(|h| LossSpec::new(&model, h.lambda(), h))
        .collect::<Result<Vec<_>>>()?;
    (0..chains)
        .map(|c| {
            let mut rng = RngStream::new(seed, streams::CHAINS + c as u64);
            let mut state = ChainState::new(start.clone());
            state.round = histories.first().map_or(0, History::round);
            for (spec, schedule) in specs.iter().zip(schedules) {
                state = run_epoch(&state, spec, schedule, GradientMode::Full, &mut rng)?;
            }
            Ok(state.theta)
        })
        .collect()
}

/// Empirical moments of simulated chains next to the exact law, with
/// per-entry z-scores.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    pub law: GaussianLaw,
    pub chains: usize,
    pub empirical_mean: DVector<f64>,
    pub empirical_covariance: DMatrix<f64>,
    /// `(m̂ − μ) / sqrt(Σ_jj / N)`
    pub mean_z: DVector<f64>,
    /// `(Ŝ_jk − Σ_jk) / sqrt((Σ_jj Σ_kk + Σ_jk²) / N)`, the Gaussian standard
    /// error of a sample covariance.
    pub covariance_z: DMatrix<f64>,
}

impl MomentCheck {
    pub fn max_abs_z(&self) -> f64 {
        self.mean_z
            .iter()
            .chain(self.covariance_z.iter())
            .fold(0.0, |m, z| m.max(z.abs()))
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_abs_z() <= threshold
    }

    /// Human-readable description of every entry beyond `threshold`.
    pub fn offending(&self, threshold: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (j, z) in self.mean_z.iter().enumerate() {
            if !(z.abs() <= threshold) {
                out.push(format!(
                    "mean[{j}]: empirical {:.6e} vs exact {:.6e} (z = {z:.2})",
                    self.empirical_mean[j], self.law.mean[j]
                ));
            }
        }
        let d = self.mean_z.len();
        for j in 0..d {
            for k in j..d {
                let z = self.covariance_z[(j, k)];
                if !(z.abs() <= threshold) {
                    out.push(format!(
                        "cov[{j},{k}]: empirical {:.6e} vs exact {:.6e} (z = {z:.2})",
                        self.empirical_covariance[(j, k)],
                        self.law.covariance[(j, k)]
                    ));
                }
            }
        }
        out
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compares `samples` with `law`.
pub fn compare_moments(samples: &[DVector<f64>], law: GaussianLaw) -> Result<MomentCheck> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("moment check needs at least two samples"));
    }
    let d = law.mean.len();
    let mut mean = DVector::zeros(d);
    let mut scatter = DMatrix::zeros(d, d);
    // Welford accumulation.
    for (i, s) in samples.iter().enumerate() {
        let delta = s - &mean;
        mean += &delta / (i + 1) as f64;
        let delta2 = s - &mean;
        scatter.ger(1.0, &delta, &delta2, 1.0);
    }
    let cov = scatter / (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    let nf = n as f64;
    let sigma = &law.covariance;
    let mean_z = DVector::from_fn(d, |j, _| {
        z_score(mean[j] - law.mean[j], (sigma[(j, j)] / nf).max(0.0).sqrt())
    });
    let covariance_z = DMatrix::from_fn(d, d, |j, k| {
        let var = (sigma[(j, j)] * sigma[(k, k)] + sigma[(j, k)].powi(2)) / nf;
        z_score(cov[(j, k)] - sigma[(j, k)], var.max(0.0).sqrt())
    });
    Ok(MomentCheck {
        law,
        chains: n,
        empirical_mean: mean,
        empirical_covariance: cov,
        mean_z,
        covariance_z,
    })
}

/// Simulates chains under `schedules` and compares them with the exact law
/// computed under `oracle_schedules` (normally the same; a mismatched oracle
/// is the negative control).
pub fn moment_check(
    histories: &[History],
    schedules: &[LmcSchedule],
    oracle_schedules: &[LmcSchedule],
    start: &DVector<f64>,
    chains: usize,
    seed: u64,
) -> Result<MomentCheck> {
    let law = closed_form_law(histories, oracle_schedules, start)?;
    let samples = simulate_chains(histories, schedules, start, chains, seed)?;
    compare_moments(&samples, law)
}
