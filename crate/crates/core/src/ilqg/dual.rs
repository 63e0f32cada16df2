use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_fit::{LinearDynamicsModel, QuadraticCostModel};
use crate::trajopt::{LinearGaussianPolicy, NominalTrajectory};

use super::backward::{backward_pass, BackwardPass};
use super::kl::{modified_cost, trajectory_kl};

/// Factor between successive rungs of the positive-definiteness ladder.
pub const PD_LADDER_FACTOR: f64 = 10.0;
/// Largest η tried before giving up on positive definiteness.
pub const PD_LADDER_LIMIT: f64 = 1e16;

/// Dual variable and KL bound for one constrained update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub eta: f64,
    pub epsilon: f64,
    pub growth: f64,
    pub max_iterations: usize,
}

impl DualState {
    pub fn new(eta: f64, epsilon: f64) -> Self {
        Self {
            eta,
            epsilon,
            growth: 10.0,
            max_iterations: 16,
        }
    }
}

/// Backward pass on the modified cost at a given η.
pub fn solve_at_eta(
    dynamics: &LinearDynamicsModel,
    cost: &QuadraticCostModel,
    old_policy: &LinearGaussianPolicy,
    nominal: &NominalTrajectory,
    eta: f64,
) -> Result<BackwardPass> {
    let modified = modified_cost(cost, old_policy, eta)?;
    backward_pass(dynamics, &modified, nominal)
}

/// Smallest η on the ladder `eta0 · 10^k` for which the modified-cost
/// backward pass has a positive definite `Q_uu` at every timestep.
pub fn initialize_eta_for_pd(
    dynamics: &LinearDynamicsModel,
    cost: &QuadraticCostModel,
    old_policy: &LinearGaussianPolicy,
    nominal: &NominalTrajectory,
    eta0: f64,
) -> Result<f64> {
    if !(eta0 > 0.0) || !eta0.is_finite() {
        return Err(Error::Usage(format!("initial η must be positive, got {eta0}")));
    }
    let mut eta = eta0;
    while eta <= PD_LADDER_LIMIT {
        match solve_at_eta(dynamics, cost, old_policy, nominal, eta) {
            Ok(_) => return Ok(eta),
            Err(Error::NotPositiveDefinite { what: "Q_uu", .. }) => eta *= PD_LADDER_FACTOR,
            Err(e) => return Err(e),
        }
    }
    Err(Error::EtaLadderExhausted {
        limit: PD_LADDER_LIMIT,
    })
}

/// One rung visited by the dual descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderStep {
    pub eta: f64,
    /// `None` when the backward pass was not positive definite at this η.
    pub kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedUpdate {
    pub policy: LinearGaussianPolicy,
    pub kl: f64,
    pub eta: f64,
    /// Whether `kl ≤ ε`. When false, `policy` is the highest-η attempt.
    pub satisfied: bool,
    pub ladder: Vec<LadderStep>,
}

/// Dual descent on η: solve under the modified cost, measure the trajectory
/// KL, and multiply η by the growth factor until the bound holds.
pub fn constrained_update(
    dynamics: &LinearDynamicsModel,
    cost: &QuadraticCostModel,
    old_policy: &LinearGaussianPolicy,
    nominal: &NominalTrajectory,
    dual: &DualState,
) -> Result<ConstrainedUpdate> {
    if !(dual.eta > 0.0 && dual.eta.is_finite()) {
        return Err(Error::Usage(format!("η must be positive, got {}", dual.eta)));
    }
    if !(dual.epsilon > 0.0) || !(dual.growth > 1.0) || dual.max_iterations == 0 {
        return Err(Error::Usage("invalid dual settings".into()));
    }
    let x0 = &nominal.states[0];
    let mut eta = dual.eta;
    let mut ladder = Vec::with_capacity(dual.max_iterations);
    let mut best: Option<(LinearGaussianPolicy, f64, f64)> = None;

    for _ in 0..dual.max_iterations {
        match solve_at_eta(dynamics, cost, old_policy, nominal, eta) {
            Ok(bp) => {
                let kl = trajectory_kl(&bp.policy, old_policy, dynamics, x0)?;
                ladder.push(LadderStep { eta, kl: Some(kl) });
                if kl <= dual.epsilon {
                    return Ok(ConstrainedUpdate {
                        policy: bp.policy,
                        kl,
                        eta,
                        satisfied: true,
                        ladder,
                    });
                }
                best = Some((bp.policy, kl, eta));
            }
            Err(Error::NotPositiveDefinite { what: "Q_uu", .. }) => {
                ladder.push(LadderStep { eta, kl: None });
            }
            Err(e) => return Err(e),
        }
        eta *= dual.growth;
    }
    match best {
        Some((policy, kl, eta)) => Ok(ConstrainedUpdate {
            policy,
            kl,
            eta,
            satisfied: false,
            ladder,
        }),
        None => Err(Error::EtaLadderExhausted { limit: eta }),
    }
}
