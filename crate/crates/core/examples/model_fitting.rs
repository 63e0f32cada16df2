//! Explore around the no-move policy, fit local models and compare them
//! with finite differences of the true arm.

use kl_ilqg::arm::{ArmEnvironment, ArmModel, CostParams, EnvConfig};
use kl_ilqg::model_fit::{collect_samples, fit_cost, fit_dynamics, ExplorationConfig};
use kl_ilqg::oracles::finite_diff_expansion;
use kl_ilqg::trajopt::{Environment, LinearGaussianPolicy};
use nalgebra::{DVector, Point3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kl_ilqg::Result<()> {
    let cost = CostParams {
        v: 0.1,
        alpha: 1e-7,
        target: Point3::new(0.5, 0.5, 0.5),
        unit: 1e-3,
    };
    let mut start = DVector::zeros(7);
    start[1] = 0.4;
    start[3] = -0.8;
    let env = ArmEnvironment::new(
        ArmModel::iiwa14(),
        EnvConfig {
            initial_state: start.clone(),
            ..EnvConfig::default()
        },
        cost,
        0,
    )?;
    let config = ExplorationConfig::default();
    let policy = LinearGaussianPolicy::constant(env.horizon(), 7, &start, 1f64.to_radians().powi(2))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = collect_samples(&|s| env.reseeded(s), &policy, &config, &mut rng)?;
    let dynamics = fit_dynamics(&samples, &config)?;
    let model = fit_cost(&samples, &config)?;

    println!("{} rollouts of {} steps", samples.rollouts(), samples.horizon());
    for (t, step) in dynamics.steps.iter().enumerate() {
        println!("t={t}  dynamics residual rms {:.2e} rad", step.residual_rms);
    }

    let xf = &samples.nominal.states[samples.horizon()];
    let fd = finite_diff_expansion(
        |x| env.clone().terminal_cost(x).unwrap(),
        xf,
        |x| 1e-4 * (1.0 + x.abs()),
    )?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
    println!(
        "terminal cost at nominal: fitted {:.3}  true {:.3}",
        model.terminal.constant, fd.value
    );
    println!(
        "terminal gradient norm: fitted {:.3}  finite differences {:.3}  (rel {:.2e})",
        model.terminal.gradient.norm(),
        fd.gradient.norm(),
        rel(model.terminal.gradient.norm(), fd.gradient.norm())
    );
    Ok(())
}
