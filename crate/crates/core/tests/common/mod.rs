#![allow(dead_code)]

use kl_ilqg::model_fit::{LinearDynamicsModel, QuadraticCostModel};
use kl_ilqg::oracles::LQProblem;
use kl_ilqg::trajopt::{LinearGaussianPolicy, NominalTrajectory};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub problem: LQProblem,
    pub old: LinearGaussianPolicy,
    pub nominal: NominalTrajectory,
    pub dynamics: LinearDynamicsModel,
    pub cost: QuadraticCostModel,
}

/// Random LQ problem, a random old policy with `variance · I` exploration,
/// and exact local models around the old policy's mean rollout.
pub fn fixture(seed: u64, n: usize, m: usize, horizon: usize, variance: f64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = LQProblem::random(n, m, horizon, &mut rng);
    let old = LinearGaussianPolicy::new(
        (0..horizon)
            .map(|_| DMatrix::from_fn(m, n, |_, _| rng.random_range(-0.2..0.2)))
            .collect(),
        (0..horizon)
            .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
            .collect(),
        vec![DMatrix::identity(m, m) * variance; horizon],
    )
    .unwrap();
    let nominal = mean_rollout(&problem, &old);
    let (dynamics, cost) = problem.expand_about(&nominal);
    Fixture {
        problem,
        old,
        nominal,
        dynamics,
        cost,
    }
}

pub fn mean_rollout(problem: &LQProblem, policy: &LinearGaussianPolicy) -> NominalTrajectory {
    let mut x = problem.x0.clone();
    let mut states = vec![x.clone()];
    let mut actions = Vec::new();
    for t in 0..problem.horizon {
        let u = policy.mean_action(t, &x).unwrap();
        x = &problem.a * &x + &problem.b * &u + &problem.c;
        actions.push(u);
        states.push(x.clone());
    }
    NominalTrajectory { states, actions }
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-12)
}
