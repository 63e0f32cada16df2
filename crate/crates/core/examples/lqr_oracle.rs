//! Backward pass on exact local models of random affine-quadratic problems,
//! compared with the Riccati recursion.

use kl_ilqg::harness::lqr_check;
use kl_ilqg::ilqg::backward_pass;
use kl_ilqg::oracles::{riccati_lqr, LQProblem};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kl_ilqg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let problem = LQProblem::random(4, 2, 20, &mut rng);
    let riccati = riccati_lqr(&problem)?;

    // expanding around an arbitrary nominal gives the same affine policy
    let nominal = problem.nominal_for(&vec![DVector::from_element(2, 0.3); problem.horizon]);
    let (dynamics, cost) = problem.expand_about(&nominal);
    let bp = backward_pass(&dynamics, &cost, &nominal)?;

    for t in [0, 10, 19] {
        let k = &bp.policy.gains[t];
        println!("t={t:2}  |K - K*| = {:.2e}  |k - k*| = {:.2e}",
            (k - &riccati.gains[t]).amax(),
            (&bp.policy.offsets[t] - &riccati.offsets[t]).amax());
    }
    println!("optimal cost from x0: {:.6}", riccati.optimal_cost(&problem.x0));

    let check = lqr_check(20, 0)?;
    println!(
        "{} fixtures: max relative gain error {:.2e}, offset {:.2e}",
        check.fixtures, check.max_gain_rel_error, check.max_offset_rel_error
    );
    Ok(())
}
