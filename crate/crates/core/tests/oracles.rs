use lmcts::agents::{AgentConfig, LmcTs, Policy};
use lmcts::diagnostics::random_linear_histories;
use lmcts::domain::{ArmFeature, ArmSet, History};
use lmcts::envs::EnvConfig;
use lmcts::harness::{run_one, Experiment};
use lmcts::models::RewardModel;
use lmcts::sampler::{closed_form_law, theory_schedule, GradientMode, LmcSchedule, ScheduleMode};
use nalgebra::{DMatrix, DVector};

/// K, η and β⁻¹ straight from the formulas, with the eigenvalues supplied.
fn theory_oracle(lmin: f64, lmax: f64, r: f64, delta: f64, t: f64, d: f64) -> (usize, f64, f64) {
    let log_term = (t * t * t / delta).ln();
    let inner = 3.0 * r * (2.0 * d * t * log_term).sqrt();
    let k = ((lmax / lmin) * inner.ln()).ceil() as usize;
    (k, 1.0 / (4.0 * lmax), 4.0 * r * (d * log_term).sqrt())
}

#[test]
fn theory_schedule_matches_formula() {
    // V = I, R = 1, δ = 0.1, T = 100, d = 2.
    let (k, eta, inv_beta) = theory_oracle(1.0, 1.0, 1.0, 0.1, 100.0, 2.0);
    assert_eq!((k, eta), (6, 0.25));
    assert!((inv_beta - 22.7108).abs() < 1e-3);
    let s = theory_schedule(&DMatrix::identity(2, 2), 1.0, 0.1, 100, 2).unwrap();
    assert_eq!(s.epoch_length, 6);
    assert_eq!(s.step_size, 0.25);
    assert!((1.0 / s.beta - inv_beta).abs() < 1e-9);

    // diag(4, 1): κ = 4.
    let (k, eta, _) = theory_oracle(1.0, 4.0, 1.0, 0.1, 100.0, 2.0);
    assert_eq!(k, 22);
    let s = theory_schedule(
        &DMatrix::from_diagonal(&DVector::from_column_slice(&[4.0, 1.0])),
        1.0,
        0.1,
        100,
        2,
    )
    .unwrap();
    assert_eq!(s.epoch_length, k);
    assert!((s.step_size - eta).abs() < 1e-9);
}

/// Propagates mean and covariance one Langevin step at a time:
/// `μ ← μ − 2η(Vμ − b)`, `Σ ← AΣAᵀ + (2η/β)I`.
fn stepwise_law(
    hs: &[History],
    ss: &[LmcSchedule],
    start: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let d = start.len();
    let mut mean = start.clone();
    let mut cov = DMatrix::zeros(d, d);
    for (h, s) in hs.iter().zip(ss) {
        let a = DMatrix::identity(d, d) - h.gram() * (2.0 * s.step_size);
        for _ in 0..s.epoch_length {
            mean = &mean - (h.gram() * &mean - h.moment()) * (2.0 * s.step_size);
            cov =
                &a * &cov * a.transpose() + DMatrix::identity(d, d) * (2.0 * s.step_size / s.beta);
        }
    }
    (mean, cov)
}

#[test]
fn closed_form_law_matches_stepwise_propagation() {
    for (d, t, seed) in [(2, 1, 0), (2, 5, 1), (3, 3, 2), (3, 5, 3)] {
        let hs = random_linear_histories(d, t, 1.0, seed).unwrap();
        let ss: Vec<LmcSchedule> = hs
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let lmax = nalgebra::SymmetricEigen::new(h.gram().clone())
                    .eigenvalues
                    .max();
                LmcSchedule::new(0.25 / lmax, 2.0, 3 + i).unwrap()
            })
            .collect();
        let start = DVector::from_fn(d, |i, _| 0.5 - i as f64);
        let law = closed_form_law(&hs, &ss, &start).unwrap();
        let (mean, cov) = stepwise_law(&hs, &ss, &start);
        assert!((law.mean - mean).amax() < 1e-12);
        assert!((law.covariance - cov).amax() < 1e-12);
    }
}

#[test]
fn scalar_law_example() {
    // One observation x = 1, r = 1 with λ = 1: V = 2, θ̂ = 0.5.
    // η = 0.125 gives A = 0.5; with K = 2 from 0:
    // mean = (1 − 0.25)·0.5, var = (2·0.125/2)(1 + 0.25).
    let mut h = History::new(1.0, 1).unwrap();
    h.observe(&ArmFeature::from_slice(&[1.0]).unwrap(), 1.0)
        .unwrap();
    let law = closed_form_law(
        &[h],
        &[LmcSchedule::new(0.125, 2.0, 2).unwrap()],
        &DVector::zeros(1),
    )
    .unwrap();
    assert!((law.mean[0] - 0.375).abs() < 1e-15);
    assert!((law.covariance[(0, 0)] - 0.15625).abs() < 1e-15);
}

#[test]
fn chain_is_warm_started_across_rounds() {
    let mut agent = LmcTs::new(
        RewardModel::linear(2),
        1.0,
        ScheduleMode::Practical {
            eta0: 0.1,
            inv_beta: 0.01,
            epoch_length: 7,
        },
        GradientMode::Full,
        3,
    )
    .unwrap();
    let arms = ArmSet::new(vec![
        ArmFeature::from_slice(&[1.0, 0.0]).unwrap(),
        ArmFeature::from_slice(&[0.0, 1.0]).unwrap(),
    ])
    .unwrap();
    let mut previous = agent.chain().theta.clone();
    for t in 1..=5 {
        // The epoch starts where the last one ended: a zero-step schedule
        // would leave the iterate in place.
        let before = agent.chain().clone();
        assert_eq!(before.theta, previous);
        assert_eq!(before.round, t - 1);
        let i = agent.select(&arms).unwrap();
        assert_eq!(agent.chain().round, t);
        assert_eq!(agent.chain().inner, 7);
        previous = agent.chain().theta.clone();
        agent.update(arms.get(i).unwrap(), 1.0).unwrap();
    }
}

#[test]
fn uniform_regret_grows_linearly() {
    let exp = Experiment::new(
        AgentConfig::Uniform {},
        EnvConfig::Linear {
            dim: 5,
            arms: 10,
            changing: true,
            noise_variance: None,
        },
        5000,
    )
    .unwrap();
    let rec = run_one(&exp, 1).unwrap();
    let half = rec.cumulative[2499];
    let full = rec.cumulative[4999];
    let ratio = full / half;
    assert!((1.85..2.15).contains(&ratio), "ratio {ratio}");
    assert!(rec.cumulative.windows(2).all(|w| w[1] >= w[0]));
}
