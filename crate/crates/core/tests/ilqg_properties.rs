mod common;

use common::{fixture, rel_err};
use kl_ilqg::ilqg::{
    backward_pass, constrained_update, initialize_eta_for_pd, modified_cost, solve_at_eta,
    trajectory_kl, DualState,
};
use kl_ilqg::model_fit::{Quadratic, QuadraticCostModel};
use kl_ilqg::oracles::riccati_lqr;
use kl_ilqg::trajopt::LinearGaussianPolicy;
use kl_ilqg::Error;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn shape() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1..=4usize, 1..=2usize, 1..=8usize)
}

fn asym(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kl_stays_within_bound((seed, n, m, t) in shape(), eps_idx in 0..3usize) {
        let epsilon = [0.1, 1.0, 10.0][eps_idx];
        let f = fixture(seed, n, m, t, 1.0);
        let eta0 = initialize_eta_for_pd(&f.dynamics, &f.cost, &f.old, &f.nominal, 1e-6).unwrap();
        let up = constrained_update(&f.dynamics, &f.cost, &f.old, &f.nominal, &DualState::new(eta0, epsilon)).unwrap();
        prop_assert!(up.satisfied);
        let kl = trajectory_kl(&up.policy, &f.old, &f.dynamics, &f.problem.x0).unwrap();
        prop_assert!(kl >= 0.0 && kl <= 1.05 * epsilon, "kl {} ε {}", kl, epsilon);
    }

    #[test]
    fn kl_does_not_grow_along_the_ladder((seed, n, m, t) in shape()) {
        let f = fixture(seed, n, m, t, 1.0);
        let eta0 = initialize_eta_for_pd(&f.dynamics, &f.cost, &f.old, &f.nominal, 1e-6).unwrap();
        let up = constrained_update(&f.dynamics, &f.cost, &f.old, &f.nominal, &DualState::new(eta0, 1e-3)).unwrap();
        let kls: Vec<f64> = up.ladder.iter().filter_map(|s| s.kl).collect();
        for w in kls.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "{:?}", kls);
        }
    }

    #[test]
    fn expansions_symmetric_and_covariance_inverts_q_uu((seed, n, m, t) in shape(), log_eta in -2.0..3.0f64) {
        let f = fixture(seed, n, m, t, 0.5);
        let eta0 = initialize_eta_for_pd(&f.dynamics, &f.cost, &f.old, &f.nominal, 1e-6).unwrap();
        let eta = eta0.max(10f64.powf(log_eta));
        let bp = solve_at_eta(&f.dynamics, &f.cost, &f.old, &f.nominal, eta).unwrap();
        for (q, cov) in bp.q.iter().zip(&bp.policy.covariances) {
            prop_assert!(asym(&q.hessian) < 1e-9);
            let round = cov * q.q_uu() - DMatrix::identity(m, m);
            prop_assert!(round.amax() < 1e-8);
            prop_assert!(asym(cov) < 1e-10);
            prop_assert!(SymmetricEigen::new(cov.clone()).eigenvalues.min() > 0.0);
        }
        for v in &bp.values {
            prop_assert!(asym(&v.hessian) < 1e-9);
        }
    }

    #[test]
    fn unconstrained_pass_reproduces_riccati((seed, n, m, t) in shape()) {
        let f = fixture(seed, n, m, t, 1.0);
        let bp = backward_pass(&f.dynamics, &f.cost, &f.nominal).unwrap();
        let oracle = riccati_lqr(&f.problem).unwrap();
        for s in 0..t {
            prop_assert!(rel_err(&bp.policy.gains[s], &oracle.gains[s]) < 1e-6);
            let k = DMatrix::from_column_slice(m, 1, bp.policy.offsets[s].as_slice());
            let k_star = DMatrix::from_column_slice(m, 1, oracle.offsets[s].as_slice());
            prop_assert!(rel_err(&k, &k_star) < 1e-6);
        }
    }

    #[test]
    fn kl_nonnegative_and_zero_only_for_identical((seed, n, m, t) in shape(), shift in 1e-3..1.0f64) {
        let f = fixture(seed, n, m, t, 1.0);
        let same = trajectory_kl(&f.old, &f.old, &f.dynamics, &f.problem.x0).unwrap();
        prop_assert!(same.abs() < 1e-12);
        let mut other = f.old.clone();
        other.offsets[t - 1][0] += shift;
        let kl = trajectory_kl(&other, &f.old, &f.dynamics, &f.problem.x0).unwrap();
        prop_assert!(kl > 0.0);
    }
}

#[test]
fn loose_bound_returns_plain_backward_solution() {
    let f = fixture(11, 3, 2, 6, 1.0);
    let eta0 = initialize_eta_for_pd(&f.dynamics, &f.cost, &f.old, &f.nominal, 1e-6).unwrap();
    let up = constrained_update(&f.dynamics, &f.cost, &f.old, &f.nominal, &DualState::new(eta0, 1e9)).unwrap();
    let direct = solve_at_eta(&f.dynamics, &f.cost, &f.old, &f.nominal, eta0).unwrap();
    assert_eq!(up.eta, eta0);
    assert_eq!(up.ladder.len(), 1);
    assert_eq!(up.policy, direct.policy);
}

#[test]
fn tight_bound_keeps_policy_close() {
    let f = fixture(12, 3, 2, 6, 1.0);
    let eta0 = initialize_eta_for_pd(&f.dynamics, &f.cost, &f.old, &f.nominal, 1e-6).unwrap();
    let up = constrained_update(&f.dynamics, &f.cost, &f.old, &f.nominal, &DualState::new(eta0, 1e-8)).unwrap();
    assert!(up.satisfied);
    for t in 0..6 {
        assert!((&up.policy.gains[t] - &f.old.gains[t]).amax() < 1e-3);
        assert!((&up.policy.offsets[t] - &f.old.offsets[t]).amax() < 1e-3);
    }
}

fn flat_cost(f: &common::Fixture) -> QuadraticCostModel {
    let p = f.cost.steps[0].dim();
    QuadraticCostModel {
        nominal: f.cost.nominal.clone(),
        steps: vec![Quadratic::zeros(p); f.cost.steps.len()],
        terminal: Quadratic::zeros(f.cost.terminal.dim()),
    }
}

#[test]
fn convex_cost_keeps_initial_eta() {
    let f = fixture(13, 2, 2, 5, 1.0);
    let eta = initialize_eta_for_pd(&f.dynamics, &f.cost, &f.old, &f.nominal, 1e-6).unwrap();
    assert_eq!(eta, 1e-6);
    // the penalty alone is positive definite
    let eta = initialize_eta_for_pd(&f.dynamics, &flat_cost(&f), &f.old, &f.nominal, 1e-6).unwrap();
    assert_eq!(eta, 1e-6);
}

#[test]
fn concave_action_block_needs_large_enough_eta() {
    let f = fixture(14, 2, 2, 1, 1.0);
    let mut cost = flat_cost(&f);
    let l_uu = DMatrix::from_row_slice(2, 2, &[-5.0, 1.0, 1.0, -3.0]);
    cost.steps[0].hessian.view_mut((2, 2), (2, 2)).copy_from(&l_uu);
    let eta = initialize_eta_for_pd(&f.dynamics, &cost, &f.old, &f.nominal, 1e-6).unwrap();
    let shifted = &l_uu / eta + DMatrix::identity(2, 2);
    assert!(SymmetricEigen::new(shifted).eigenvalues.min() > 0.0);
    // one rung lower fails
    let lower = &l_uu / (eta / 10.0) + DMatrix::identity(2, 2);
    assert!(SymmetricEigen::new(lower).eigenvalues.min() <= 0.0);
}

#[test]
fn ladder_reports_exhaustion() {
    let f = fixture(15, 1, 1, 1, 1.0);
    let mut cost = flat_cost(&f);
    cost.steps[0].hessian[(1, 1)] = f64::MIN / 1e10;
    let r = initialize_eta_for_pd(&f.dynamics, &cost, &f.old, &f.nominal, 1e-6);
    assert!(matches!(r, Err(Error::EtaLadderExhausted { .. })));
}

#[test]
fn modified_cost_matches_definition_at_a_point() {
    // l/η − log N(u; Kx + k, Σ) evaluated directly against the expansion
    let f = fixture(16, 2, 1, 1, 0.7);
    let eta = 3.0;
    let modified = modified_cost(&f.cost, &f.old, eta).unwrap();
    let center = f.nominal.point(0);
    let z = &center + DVector::from_vec(vec![0.3, -0.2, 0.5]);
    let (x, u) = (z.rows(0, 2).into_owned(), z.rows(2, 1).into_owned());
    let l = f.problem.stage_cost(&x, &u);
    let mean = f.old.mean_action(0, &x).unwrap();
    let var = f.old.covariances[0][(0, 0)];
    let log_p = -0.5 * (u[0] - mean[0]).powi(2) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
    let expected = l / eta - log_p;
    let got = modified.steps[0].eval(&(&z - &center));
    assert!((expected - got).abs() < 1e-9, "{expected} vs {got}");
}

#[test]
fn old_policy_covariance_must_be_pd() {
    let f = fixture(17, 2, 1, 2, 1.0);
    let mut bad = f.old.clone();
    bad.covariances[1] = DMatrix::from_element(1, 1, -1.0);
    let bad = LinearGaussianPolicy { ..bad };
    assert!(modified_cost(&f.cost, &bad, 1.0).is_err());
}
