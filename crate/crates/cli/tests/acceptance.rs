//! Acceptance suite. Prints one line per criterion and exits non-zero if an
//! unexpected failure occurs.
//!
//! Run a subset with `LMCTS_ACCEPTANCE=1,3,8 cargo test --test acceptance`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use lmcts::diagnostics::{moment_check, random_linear_histories};
use lmcts::domain::{ArmFeature, History};
use lmcts::harness::read_curve;
use lmcts::linalg::extreme_eigenvalues;
use lmcts::models::{Link, LossSpec, RewardModel};
use lmcts::rng::RngStream;
use lmcts::sampler::{closed_form_law, LmcSchedule};
use lmcts_cli::commands::{diagnose_schedules, simulate, sweep, Options, SweepReport};
use lmcts_cli::config::ExperimentConfig;
use nalgebra::{DMatrix, DVector};

struct Outcome {
    pass: bool,
    detail: String,
    /// Reason a failure is expected; the line still reads FAIL.
    known_failure: Option<&'static str>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            known_failure: None,
        }
    }
}

/// A configuration that wrote curve files, kept for the determinism rerun.
struct Written {
    config: String,
    kind: Kind,
    out: PathBuf,
}

#[derive(Clone, Copy)]
enum Kind {
    Simulate,
    Sweep,
}

struct Suite {
    root: tempfile::TempDir,
    written: Vec<Written>,
}

impl Suite {
    fn dir(&self, name: &str) -> PathBuf {
        let p = self.root.path().join(name);
        fs::create_dir_all(&p).unwrap();
        p
    }

    fn sweep(&mut self, name: &str, config: &str) -> SweepReport {
        let out = self.dir(name);
        let parsed = ExperimentConfig::parse(config).expect("acceptance config parses");
        let report = sweep(&parsed, &opts(&out)).expect("sweep runs");
        self.written.push(Written {
            config: config.to_owned(),
            kind: Kind::Sweep,
            out,
        });
        report
    }

    fn simulate(&mut self, name: &str, config: &str) -> lmcts_cli::commands::SimulateReport {
        let out = self.dir(name);
        let parsed = ExperimentConfig::parse(config).expect("acceptance config parses");
        let report = simulate(&parsed, &opts(&out)).expect("simulation runs");
        self.written.push(Written {
            config: config.to_owned(),
            kind: Kind::Simulate,
            out,
        });
        report
    }
}

fn opts(out: &Path) -> Options {
    Options {
        out: Some(out.to_path_buf()),
        ..Options::default()
    }
}

fn best_curve(report: &SweepReport) -> (String, Vec<f64>) {
    let best = &report.rows[0];
    let dir = report.summary.parent().unwrap();
    let (mean, _) = read_curve(&dir.join(format!("{}_curve.csv", best.tag))).unwrap();
    (best.params.clone(), mean)
}

/// Mean per-round regret over the last third against the first third.
fn thirds(curve: &[f64]) -> (f64, f64) {
    let n = curve.len();
    let third = n / 3;
    let first = curve[third - 1] / third as f64;
    let last = (curve[n - 1] - curve[n - 1 - third]) / third as f64;
    (first, last)
}

fn sublinear(curve: &[f64]) -> bool {
    let (first, last) = thirds(curve);
    last < 0.5 * first
}

fn within_budget(start: Instant, minutes: f64) -> (bool, String) {
    let secs = start.elapsed().as_secs_f64();
    (
        secs < minutes * 60.0,
        format!("{secs:.1}s of {minutes} min"),
    )
}

fn criterion_1(_: &mut Suite) -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut entries = 0;
    let mut failures = Vec::new();
    for d in [2usize, 3] {
        for t in [1usize, 3, 5] {
            let seed = 100 + 10 * d as u64 + t as u64;
            let hs = random_linear_histories(d, t, 1.0, seed).unwrap();
            let ss = diagnose_schedules(&hs, 0.25, 2.0, 5).unwrap();
            let check = moment_check(&hs, &ss, &ss, &DVector::zeros(d), 100_000, seed).unwrap();
            entries += d + d * (d + 1) / 2;
            worst = worst.max(check.max_abs_z());
            if !check.passes(4.0) {
                failures.push(format!("d={d} t={t}: {:?}", check.offending(4.0)));
            }
        }
    }
    let (fast, time) = within_budget(start, 1.0);
    Outcome::new(failures.is_empty() && fast, {
        let mut detail = format!("max |z| {worst:.2} over {entries} moments (limit 4), {time}");
        if !failures.is_empty() {
            detail += &format!("; failing: {failures:?}");
        }
        detail
    })
}

/// One round of linear LMC on a fixed history with `η = f/λ_max` and
/// `K = 10/f`, returning the max-entry relative error of the exact
/// covariance against each target.
fn criterion_2_errors(targets: &[DMatrix<f64>], h: &History, beta: f64) -> Vec<Vec<f64>> {
    let (_, lambda_max) = extreme_eigenvalues(h.gram());
    let start = DVector::zeros(h.dim());
    let mut errors = vec![Vec::new(); targets.len()];
    for f in [0.1, 0.01, 0.001] {
        let k = (10.0_f64 / f).round() as usize;
        let s = LmcSchedule::new(f / lambda_max, beta, k).unwrap();
        let law = closed_form_law(std::slice::from_ref(h), &[s], &start).unwrap();
        for (target, errs) in targets.iter().zip(&mut errors) {
            errs.push((&law.covariance - target).amax() / target.amax());
        }
    }
    errors
}

fn criterion_2(_: &mut Suite) -> Outcome {
    let start = Instant::now();
    let beta = 2.0;
    let h = random_linear_histories(2, 6, 1.0, 7)
        .unwrap()
        .pop()
        .unwrap();
    assert_eq!(h.round(), 5);
    let v_inv = h.gram().clone().try_inverse().unwrap();
    let literal = &v_inv / beta;
    let gibbs = &v_inv / (2.0 * beta);
    let errors = criterion_2_errors(&[literal, gibbs], &h, beta);
    let ok = |e: &[f64]| e.windows(2).all(|w| w[1] <= w[0]) && e[2] < 0.05;
    let (fast, time) = within_budget(start, 1.0);
    let literal_ok = ok(&errors[0]) && fast;
    let gibbs_ok = ok(&errors[1]);
    let fmt = |e: &[f64]| {
        e.iter()
            .map(|x| format!("{:.2}%", 100.0 * x))
            .collect::<Vec<_>>()
            .join(" -> ")
    };
    Outcome {
        pass: literal_ok,
        detail: format!(
            "error vs beta^-1 V^-1: {}; vs (2 beta)^-1 V^-1: {} ({}), {time}",
            fmt(&errors[0]),
            fmt(&errors[1]),
            if gibbs_ok {
                "converges"
            } else {
                "does not converge"
            }
        ),
        known_failure: (!literal_ok && gibbs_ok)
            .then_some("the Langevin chain on this loss targets (2 beta)^-1 V^-1"),
    }
}

fn random_history(rng: &mut RngStream, dim: usize, binary: bool) -> History {
    let n = 1 + rng.index(30);
    let transcript: Vec<(ArmFeature, f64)> = (0..n)
        .map(|_| {
            let x = rng.normal_vector(dim).normalize();
            let r = if binary {
                f64::from(u8::from(rng.bernoulli(0.5)))
            } else {
                rng.standard_normal()
            };
            (ArmFeature::new(x).unwrap(), r)
        })
        .collect();
    History::rebuild(1.0, dim, &transcript).unwrap()
}

/// Largest relative gap between the analytic directional derivative and a
/// central difference along a random unit direction, over `checks` draws.
fn gradient_check(model: &RewardModel, binary: bool, checks: usize, seed: u64) -> (usize, f64) {
    let mut rng = RngStream::new(seed, 0);
    let dim = model.input_dim();
    let mut failed = 0;
    let mut worst = 0.0f64;
    for _ in 0..checks {
        let h = random_history(&mut rng, dim, binary);
        let lambda = 0.1 + rng.uniform();
        let spec = LossSpec::new(model, lambda, &h).unwrap();
        let theta = match model {
            RewardModel::Mlp(_) => model.initial_params(&mut rng),
            _ => rng.normal_vector(model.param_dim()),
        };
        let u = rng.normal_vector(model.param_dim()).normalize();
        let analytic = spec.gradient(&theta).unwrap().dot(&u);
        let step = 1e-5;
        let plus = spec.loss(&(&theta + &u * step)).unwrap();
        let minus = spec.loss(&(&theta - &u * step)).unwrap();
        let numeric = (plus - minus) / (2.0 * step);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        worst = worst.max(rel);
        if !(rel <= 1e-4) {
            failed += 1;
        }
    }
    (failed, worst)
}

fn criterion_3(_: &mut Suite) -> Outcome {
    let start = Instant::now();
    let families = [
        ("linear", RewardModel::linear(10), false),
        ("glm", RewardModel::glm(10, Link::Logistic), true),
        (
            "mlp",
            RewardModel::mlp(10, &[20, 20, 20], 0.01).unwrap(),
            false,
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (name, model, binary)) in families.iter().enumerate() {
        let (failed, worst) = gradient_check(model, *binary, 200, 300 + i as u64);
        pass &= failed == 0;
        parts.push(format!("{name} {failed}/200 failed (worst {worst:.1e})"));
    }
    let (fast, time) = within_budget(start, 1.0);
    Outcome::new(pass && fast, format!("{}, {time}", parts.join(", ")))
}

const LINEAR_ENV: &str = r#"
[env]
kind = "linear"
dim = 10
arms = 20
changing = false
noise_variance = 0.5
"#;

fn run_section(horizon: usize, tag: &str, seeds: &str) -> String {
    format!("[run]\nhorizon = {horizon}\nseeds = {seeds}\ntag = \"{tag}\"\n")
}

fn criterion_4(suite: &mut Suite) -> Outcome {
    let start = Instant::now();
    let run = |tag| run_section(3000, tag, "[0, 1, 2, 3, 4]");
    let lmc = suite.sweep(
        "c4_lmcts",
        &format!(
            "{LINEAR_ENV}\n[agent]\nvariant = \"lmcts\"\nmodel = \"linear\"\neta0 = 0.5\ninv_beta = 0.1\nepoch_length = 100\n\n{}\n[grid]\ninv_beta = [0.05, 0.1, 0.2]\n",
            run("lmcts")
        ),
    );
    let lints = suite.sweep(
        "c4_lints",
        &format!(
            "{LINEAR_ENV}\n[agent]\nvariant = \"lints\"\nc = 0.03\n\n{}\n[grid]\nc = [0.02, 0.03, 0.05]\n",
            run("lints")
        ),
    );
    let eps = suite.sweep(
        "c4_eps",
        &format!(
            "{LINEAR_ENV}\n[agent]\nvariant = \"eps-greedy\"\nmodel = \"linear\"\nc = 1.0\n\n{}\n[grid]\nc = [0.3, 1.0, 3.0]\n",
            run("eps")
        ),
    );
    let (lmc_p, lmc_c) = best_curve(&lmc);
    let (lts_p, lts_c) = best_curve(&lints);
    let (eps_p, eps_c) = best_curve(&eps);
    let (l, t, e) = (
        *lmc_c.last().unwrap(),
        *lts_c.last().unwrap(),
        *eps_c.last().unwrap(),
    );
    let (lf, ll) = thirds(&lmc_c);
    let (tf, tl) = thirds(&lts_c);
    let pass = l <= 1.5 * t && l <= 0.8 * e && sublinear(&lmc_c) && sublinear(&lts_c);
    let (fast, time) = within_budget(start, 10.0);
    Outcome::new(
        pass && fast,
        format!(
            "LMC-TS {l:.1} ({lmc_p}), LinTS {t:.1} ({lts_p}), eps-greedy {e:.1} ({eps_p}); \
             ratios {:.2} (<= 1.5) and {:.2} (<= 0.8); per-round first/last third \
             LMC-TS {lf:.4}/{ll:.4}, LinTS {tf:.4}/{tl:.4}, {time}",
            l / t,
            l / e
        ),
    )
}

const LOGISTIC_ENV: &str = r#"
[env]
kind = "logistic"
dim = 10
arms = 20
changing = false
"#;

fn criterion_5(suite: &mut Suite) -> Outcome {
    let start = Instant::now();
    let run = |tag| run_section(3000, tag, "[0, 1, 2, 3, 4]");
    let lmc = suite.sweep(
        "c5_lmcts",
        &format!(
            "{LOGISTIC_ENV}\n[agent]\nvariant = \"lmcts\"\nmodel = \"logistic\"\neta0 = 0.3\ninv_beta = 0.1\nepoch_length = 100\n\n{}\n[grid]\ninv_beta = [0.03, 0.1, 0.3]\n",
            run("lmcts")
        ),
    );
    let tsl = suite.sweep(
        "c5_glmtsl",
        &format!(
            "{LOGISTIC_ENV}\n[agent]\nvariant = \"glm-tsl\"\na = 0.3\n\n{}\n[grid]\na = [0.1, 0.3, 1.0]\n",
            run("glmtsl")
        ),
    );
    let eps = suite.sweep(
        "c5_eps",
        &format!(
            "{LOGISTIC_ENV}\n[agent]\nvariant = \"eps-greedy\"\nmodel = \"logistic\"\nc = 0.3\n\n{}\n[grid]\nc = [0.1, 0.3, 1.0]\n",
            run("eps")
        ),
    );
    let (lmc_p, lmc_c) = best_curve(&lmc);
    let (tsl_p, tsl_c) = best_curve(&tsl);
    let (eps_p, eps_c) = best_curve(&eps);
    let (l, g, e) = (
        *lmc_c.last().unwrap(),
        *tsl_c.last().unwrap(),
        *eps_c.last().unwrap(),
    );
    let (fast, time) = within_budget(start, 15.0);
    Outcome::new(
        l < e && l <= 1.5 * g && fast,
        format!(
            "LMC-TS {l:.1} ({lmc_p}), GLM-TSL {g:.1} ({tsl_p}), eps-greedy {e:.1} ({eps_p}); \
             ratio to GLM-TSL {:.2} (<= 1.5), {time}",
            l / g
        ),
    )
}

const QUADRATIC_ENV: &str = r#"
[env]
kind = "quadratic"
dim = 10
arms = 20
"#;

fn criterion_6(suite: &mut Suite) -> Outcome {
    let start = Instant::now();
    let run = |tag| run_section(3000, tag, "[0, 1, 2]");
    let lmc = suite.sweep(
        "c6_lmcts",
        &format!(
            "{QUADRATIC_ENV}\n[agent]\nvariant = \"lmcts\"\nmodel = \"mlp\"\nhidden = [20, 20, 20]\neta0 = 0.003\ninv_beta = 1.0\nepoch_length = 100\nbatch_size = 32\n\n{}\n[grid]\neta0 = [0.001, 0.003]\ninv_beta = [0.3, 1.0]\n",
            run("lmcts")
        ),
    );
    let lints = suite.sweep(
        "c6_lints",
        &format!(
            "{QUADRATIC_ENV}\n[agent]\nvariant = \"lints\"\nc = 0.1\n\n{}\n[grid]\nc = [0.01, 0.1, 1.0]\n",
            run("lints")
        ),
    );
    let linucb = suite.sweep(
        "c6_linucb",
        &format!(
            "{QUADRATIC_ENV}\n[agent]\nvariant = \"linucb\"\nc = 0.1\n\n{}\n[grid]\nc = [0.01, 0.1, 1.0]\n",
            run("linucb")
        ),
    );
    let (lmc_p, lmc_c) = best_curve(&lmc);
    let l = *lmc_c.last().unwrap();
    let (ts_p, ts_c) = best_curve(&lints);
    let (ucb_p, ucb_c) = best_curve(&linucb);
    let (t, u) = (*ts_c.last().unwrap(), *ucb_c.last().unwrap());
    let (fast, time) = within_budget(start, 30.0);
    Outcome::new(
        t > 2.0 * l && u > 2.0 * l && fast,
        format!(
            "LMC-TS (MLP) {l:.1} ({lmc_p}), LinTS {t:.1} ({ts_p}), LinUCB {u:.1} ({ucb_p}); \
             ratios {:.2} and {:.2} (> 2), {time}",
            t / l,
            u / l
        ),
    )
}

fn criterion_7(suite: &mut Suite) -> Outcome {
    let start = Instant::now();
    let env = "[env]\nkind = \"linear\"\ndim = 2000\narms = 10\n";
    let run = |tag| run_section(200, tag, "[0]");
    let lmc = suite.simulate(
        "c7_lmcts",
        &format!(
            "{env}\n[agent]\nvariant = \"lmcts\"\nmodel = \"linear\"\neta0 = 0.1\ninv_beta = 0.01\nepoch_length = 20\n\n{}",
            run("lmcts")
        ),
    );
    let lints = suite.simulate(
        "c7_lints",
        &format!(
            "{env}\n[agent]\nvariant = \"lints\"\nc = 0.1\n\n{}",
            run("lints")
        ),
    );
    let lmc = &lmc.runs.records[0];
    let lints = &lints.runs.records[0];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (l, t) = (mean(&lmc.select_secs), mean(&lints.select_secs));
    let lmc_factorizations: u64 = lmc.select_factorizations.iter().sum();
    let lints_factorizations: u64 = lints.select_factorizations.iter().sum();
    let (fast, time) = within_budget(start, 10.0);
    Outcome::new(
        2.0 * l <= t && lmc_factorizations == 0 && lints_factorizations > 0 && fast,
        format!(
            "mean select time LMC-TS {:.3} ms, LinTS {:.3} ms (speedup {:.1}x, need 2x); \
             factorizations in select: LMC-TS {lmc_factorizations}, LinTS {lints_factorizations}, {time}",
            1e3 * l,
            1e3 * t,
            t / l
        ),
    )
}

fn toy_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/toy3.csv")
}

fn criterion_8(suite: &mut Suite) -> Outcome {
    let start = Instant::now();
    let env = format!(
        "[env]\nkind = \"dataset\"\npath = {:?}\nheader = true\nexpect = \"toy3\"\n",
        toy_path().to_str().unwrap()
    );
    let agents = [
        ("lmcts", "variant = \"lmcts\"\nmodel = \"linear\"\neta0 = 0.1\ninv_beta = 0.01"),
        ("lmcts_logistic", "variant = \"lmcts\"\nmodel = \"logistic\"\neta0 = 0.1\ninv_beta = 0.01"),
        ("lmcts_mlp", "variant = \"lmcts\"\nmodel = \"mlp\"\nhidden = [8, 8]\neta0 = 0.01\ninv_beta = 0.0001\nepoch_length = 20"),
        ("lints", "variant = \"lints\"\nc = 0.1"),
        ("linucb", "variant = \"linucb\"\nc = 0.1"),
        ("eps", "variant = \"eps-greedy\"\nmodel = \"linear\"\nc = 0.3"),
        ("eps_logistic", "variant = \"eps-greedy\"\nmodel = \"logistic\"\nc = 0.3"),
        ("eps_mlp", "variant = \"eps-greedy\"\nmodel = \"mlp\"\nhidden = [8, 8]\nc = 0.3\nsteps = 20"),
        ("ucbglm", "variant = \"ucb-glm\"\nc = 0.1"),
        ("glmtsl", "variant = \"glm-tsl\"\na = 0.1"),
        ("uniform", "variant = \"uniform\""),
    ];
    let mut finals = Vec::new();
    let mut binary = true;
    let mut complete = true;
    for (tag, agent) in agents {
        let report = suite.simulate(
            &format!("c8_{tag}"),
            &format!(
                "{env}\n[agent]\n{agent}\n\n{}",
                run_section(300, tag, "[0]")
            ),
        );
        let rec = &report.runs.records[0];
        complete &= rec.rounds() == 300 && rec.truncated.is_none();
        binary &= rec.regret.iter().all(|&r| r == 0.0 || r == 1.0);
        finals.push((tag, rec.final_regret()));
    }
    let uniform = finals.last().unwrap().1;
    let lmc = finals[0].1;
    // Uniform over N = 3 arms: regret ~ Binomial(T, (N − 1)/N).
    let expected = 300.0 * 2.0 / 3.0;
    let sigma = (300.0f64 * (2.0 / 3.0) * (1.0 / 3.0)).sqrt();
    let uniform_ok = (uniform - expected).abs() <= 3.0 * sigma;
    let (fast, time) = within_budget(start, 1.0);
    let list = finals
        .iter()
        .map(|(t, r)| format!("{t} {r}"))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(
        complete && binary && uniform_ok && lmc < uniform && fast,
        format!(
            "all completed: {complete}, regret in {{0,1}}: {binary}; final regrets: {list}; \
             uniform within {expected:.0} +/- {:.1}: {uniform_ok}, {time}",
            3.0 * sigma
        ),
    )
}

/// Curve files, plus per-round run files without their timing columns.
fn deterministic_files(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_owned();
        let text = fs::read_to_string(&path).unwrap();
        if name.ends_with("_curve.csv") || name.ends_with("_summary.csv") {
            out.push((name, text));
        } else if name.contains("_run") && name.ends_with(".csv") {
            let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
            let keep: Vec<usize> = (0..header.len())
                .filter(|&i| !header[i].ends_with("_secs"))
                .collect();
            let stripped = text
                .lines()
                .map(|l| {
                    let cells: Vec<&str> = l.split(',').collect();
                    keep.iter().map(|&i| cells[i]).collect::<Vec<_>>().join(",")
                })
                .collect::<Vec<_>>()
                .join("\n");
            out.push((name, stripped));
        }
    }
    out.sort();
    out
}

fn criterion_9(suite: &mut Suite) -> Outcome {
    let start = Instant::now();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    let previous: Vec<(String, Kind, PathBuf)> = suite
        .written
        .iter()
        .map(|w| (w.config.clone(), w.kind, w.out.clone()))
        .collect();
    for (i, (config, kind, first)) in previous.into_iter().enumerate() {
        let out = suite.dir(&format!("rerun{i}"));
        let parsed = ExperimentConfig::parse(&config).unwrap();
        match kind {
            Kind::Simulate => {
                simulate(&parsed, &opts(&out)).unwrap();
            }
            Kind::Sweep => {
                sweep(&parsed, &opts(&out)).unwrap();
            }
        }
        let a = deterministic_files(&first);
        let b = deterministic_files(&out);
        if a.len() != b.len() {
            mismatches.push(format!("{}: file count differs", first.display()));
        }
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            compared += 1;
            if x != y {
                mismatches.push(name.clone());
            }
        }
    }
    Outcome::new(
        compared > 0 && mismatches.is_empty(),
        format!(
            "{compared} files compared, {} differ{}, rerun {:.1}s",
            mismatches.len(),
            if mismatches.is_empty() {
                String::new()
            } else {
                format!(" {mismatches:?}")
            },
            start.elapsed().as_secs_f64()
        ),
    )
}

type Criterion = fn(&mut Suite) -> Outcome;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Criterion); 9] = [
        (1, "exact sampler law", criterion_1),
        (2, "small-step covariance limit", criterion_2),
        (3, "gradient correctness", criterion_3),
        (4, "linear bandit regret", criterion_4),
        (5, "logistic bandit regret", criterion_5),
        (6, "quadratic bandit separation", criterion_6),
        (7, "arm-selection cost", criterion_7),
        (8, "dataset bandit plumbing", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let selected: BTreeSet<u32> = match std::env::var("LMCTS_ACCEPTANCE") {
        Ok(list) if !list.trim().is_empty() => list
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect(),
        _ => (1..=9).collect(),
    };
    let mut suite = Suite {
        root: tempfile::tempdir().unwrap(),
        written: Vec::new(),
    };
    // Determinism reruns whatever 4-8 wrote; run them first if not selected.
    if selected.contains(&9) && !selected.iter().any(|c| (4..=8).contains(c)) {
        for (_, _, f) in &criteria[3..8] {
            f(&mut suite);
        }
    }
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        if !selected.contains(&id) {
            continue;
        }
        let outcome = f(&mut suite);
        let status = match (outcome.pass, outcome.known_failure) {
            (true, _) => "PASS".to_owned(),
            (false, Some(why)) => format!("FAIL (known: {why})"),
            (false, None) => {
                unexpected += 1;
                "FAIL".to_owned()
            }
        };
        println!("criterion {id} [{name}]: {status} - {}", outcome.detail);
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
