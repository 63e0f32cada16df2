use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::model_fit::{LinearDynamicsModel, Quadratic, QuadraticCostModel};
use crate::trajopt::{LinearGaussianPolicy, State};

fn factor(cov: &DMatrix<f64>, what: &'static str, timestep: usize) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite { what, timestep })
}

/// Per-step expansion of `l / η − log p_old(u | x)` around the cost model's
/// nominal. The Gaussian normalizer is kept in the constant term.
pub fn modified_cost(
    cost: &QuadraticCostModel,
    old_policy: &LinearGaussianPolicy,
    eta: f64,
) -> Result<QuadraticCostModel> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Usage(format!("η must be positive and finite, got {eta}")));
    }
    let horizon = cost.horizon();
    check_dim("old policy horizon", horizon, old_policy.horizon())?;
    let nominal = &cost.nominal;
    let n = nominal.state_dim();
    let m = nominal.action_dim();
    let inv_eta = 1.0 / eta;

    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let chol = factor(&old_policy.covariances[t], "old policy covariance", t)?;
        let precision = chol.inverse();
        let k_old = &old_policy.gains[t];

        // u − K x − k = r + M δxu with M = [−K, I]
        let mut selector = DMatrix::zeros(m, n + m);
        selector.view_mut((0, 0), (m, n)).copy_from(&(-k_old));
        selector.view_mut((0, n), (m, m)).fill_with_identity();
        let residual =
            &nominal.actions[t] - k_old * &nominal.states[t] - &old_policy.offsets[t];

        let pm = &precision * &selector;
        let mut hessian = cost.steps[t].hessian.scale(inv_eta) + selector.transpose() * &pm;
        linalg::symmetrize_in_place(&mut hessian);
        let gradient = cost.steps[t].gradient.scale(inv_eta) + pm.transpose() * &residual;
        let normalizer = 0.5 * (m as f64 * (2.0 * PI).ln() + linalg::log_det(&chol));
        let constant = cost.steps[t].constant * inv_eta
            + 0.5 * residual.dot(&(&precision * &residual))
            + normalizer;
        steps.push(Quadratic {
            constant,
            gradient,
            hessian,
        });
    }
    Ok(QuadraticCostModel {
        nominal: nominal.clone(),
        steps,
        terminal: cost.terminal.scaled(inv_eta),
    })
}

/// `KL(p_new(τ) ‖ p_old(τ))` under the learnt linear dynamics.
///
/// State marginals are propagated as Gaussians under the new policy from a
/// deterministic initial state; the per-step conditional KL is averaged over
/// the marginal in closed form.
pub fn trajectory_kl(
    new_policy: &LinearGaussianPolicy,
    old_policy: &LinearGaussianPolicy,
    dynamics: &LinearDynamicsModel,
    initial_state: &State,
) -> Result<f64> {
    let horizon = new_policy.horizon();
    check_dim("old policy horizon", horizon, old_policy.horizon())?;
    check_dim("dynamics horizon", horizon, dynamics.horizon())?;
    let n = new_policy.state_dim();
    let m = new_policy.action_dim();
    check_dim("old policy state dimension", n, old_policy.state_dim())?;
    check_dim("old policy action dimension", m, old_policy.action_dim())?;
    check_dim("initial state", n, initial_state.len())?;

    let mut mean = initial_state.clone();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut total = 0.0;

    for t in 0..horizon {
        let chol_old = factor(&old_policy.covariances[t], "old policy covariance", t)?;
        let chol_new = factor(&new_policy.covariances[t], "new policy covariance", t)?;
        let k_new = &new_policy.gains[t];
        let gain_gap = k_new - &old_policy.gains[t];
        let mean_gap = &gain_gap * &mean + (&new_policy.offsets[t] - &old_policy.offsets[t]);

        let trace_term = chol_old.solve(&new_policy.covariances[t]).trace();
        let logdet = linalg::log_det(&chol_old) - linalg::log_det(&chol_new);
        let mahalanobis = mean_gap.dot(&chol_old.solve(&mean_gap));
        let spread = (gain_gap.transpose() * chol_old.solve(&gain_gap) * &cov).trace();
        let step_kl = 0.5 * (trace_term - m as f64 + logdet + mahalanobis + spread);
        total += step_kl.max(0.0);

        // joint over [x; u] under the new policy
        let action_mean: DVector<f64> = k_new * &mean + &new_policy.offsets[t];
        let xu_mean = linalg::stack(&mean, &action_mean);
        let kc = k_new * &cov;
        let mut joint = DMatrix::zeros(n + m, n + m);
        joint.view_mut((0, 0), (n, n)).copy_from(&cov);
        joint.view_mut((n, 0), (m, n)).copy_from(&kc);
        joint.view_mut((0, n), (n, m)).copy_from(&kc.transpose());
        joint
            .view_mut((n, n), (m, m))
            .copy_from(&(&kc * k_new.transpose() + &new_policy.covariances[t]));

        let step = &dynamics.steps[t];
        mean = &step.bias + &step.f_xu * (xu_mean - dynamics.nominal.point(t));
        cov = &step.f_xu * joint * step.f_xu.transpose();
        linalg::symmetrize_in_place(&mut cov);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("trajectory KL"));
    }
    Ok(total)
}
