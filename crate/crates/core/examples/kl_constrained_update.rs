//! Dual descent on η for a KL-bounded update of a random LQ problem.

use kl_ilqg::ilqg::{constrained_update, initialize_eta_for_pd, trajectory_kl, DualState};
use kl_ilqg::oracles::LQProblem;
use kl_ilqg::trajopt::LinearGaussianPolicy;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kl_ilqg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let problem = LQProblem::random(3, 2, 10, &mut rng);
    let old = LinearGaussianPolicy::constant(problem.horizon, 3, &DVector::zeros(2), 1.0)?;
    let nominal = problem.nominal_for(&old.offsets);
    let (dynamics, cost) = problem.expand_about(&nominal);

    let eta0 = initialize_eta_for_pd(&dynamics, &cost, &old, &nominal, 1e-6)?;
    println!("smallest positive definite rung: η = {eta0:e}");
    for epsilon in [0.1, 1.0, 10.0, 1e9] {
        let up = constrained_update(&dynamics, &cost, &old, &nominal, &DualState::new(eta0, epsilon))?;
        let check = trajectory_kl(&up.policy, &old, &dynamics, &problem.x0)?;
        println!(
            "ε = {epsilon:>8.1e}  η = {:8.1e}  KL = {:9.4}  ({} rungs, bound met: {})",
            up.eta,
            check,
            up.ladder.len(),
            up.satisfied
        );
    }
    Ok(())
}
