//! Trajectories, time-varying linear-Gaussian controllers and rollouts.
//!
//! Vectors are columns and Jacobians use numerator layout throughout the
//! crate, so a local dynamics model reads `δx_{t+1} = F_xu · [δx; δu]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Joint angles, radians.
pub type State = DVector<f64>;
/// Target joint angles, radians.
pub type Action = DVector<f64>;

/// Result of applying one action.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: State,
    /// Stage cost attributed to the `(state, action)` pair that was executed.
    pub cost: f64,
}

/// A black-box episodic system. The learner only sees states and the
/// costs reported here.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn initial_state(&self) -> State;

    fn step(&mut self, state: &State, action: &Action) -> Result<Transition>;

    fn terminal_cost(&mut self, state: &State) -> Result<f64>;

    /// Task-space error at `state`, when the environment has one (meters).
    fn distance(&mut self, _state: &State) -> Option<f64> {
        None
    }
}

/// `{x_0, u_0, …, u_{T-1}, x_T}` plus the cost recorded at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    /// `T + 1` entries; the last one is the terminal cost.
    pub costs: Vec<f64>,
}

impl Trajectory {
    pub fn new(states: Vec<State>, actions: Vec<Action>, costs: Vec<f64>) -> Result<Self> {
        check_dim("trajectory states", actions.len() + 1, states.len())?;
        check_dim("trajectory costs", actions.len() + 1, costs.len())?;
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("trajectory costs"));
        }
        Ok(Self {
            states,
            actions,
            costs,
        })
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn total_cost(&self) -> f64 {
        trajectory_total_cost(self)
    }

    pub fn to_nominal(&self) -> NominalTrajectory {
        NominalTrajectory {
            states: self.states.clone(),
            actions: self.actions.clone(),
        }
    }
}

pub fn trajectory_total_cost(traj: &Trajectory) -> f64 {
    traj.costs.iter().sum()
}

/// Mean states and actions `(x̄_t, ū_t)` that local models are expanded around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalTrajectory {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
}

impl NominalTrajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.first().map_or(0, |u| u.len())
    }

    /// `[x̄_t; ū_t]`.
    pub fn point(&self, t: usize) -> DVector<f64> {
        linalg::stack(&self.states[t], &self.actions[t])
    }
}

/// `u_t ~ N(K_t x_t + k_t, Σ_t)`, one parameter set per timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianPolicy {
    pub gains: Vec<DMatrix<f64>>,
    pub offsets: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

impl LinearGaussianPolicy {
    /// Validates shapes, finiteness and symmetry of the covariances.
    /// Positive definiteness is checked lazily by [`Self::sample_action`] or
    /// eagerly by [`Self::validate_positive_definite`].
    pub fn new(
        gains: Vec<DMatrix<f64>>,
        offsets: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let horizon = gains.len();
        check_dim("policy offsets", horizon, offsets.len())?;
        check_dim("policy covariances", horizon, covariances.len())?;
        if let Some(k0) = gains.first() {
            let (m, n) = k0.shape();
            for t in 0..horizon {
                check_dim("policy gain rows", m, gains[t].nrows())?;
                check_dim("policy gain cols", n, gains[t].ncols())?;
                check_dim("policy offset", m, offsets[t].len())?;
                check_dim("policy covariance rows", m, covariances[t].nrows())?;
                check_dim("policy covariance cols", m, covariances[t].ncols())?;
                if !linalg::all_finite_m(&gains[t])
                    || !linalg::all_finite_v(&offsets[t])
                    || !linalg::all_finite_m(&covariances[t])
                {
                    return Err(Error::NonFinite("policy parameters"));
                }
                if linalg::asymmetry(&covariances[t]) > 1e-10 * (1.0 + linalg::max_abs(&covariances[t])) {
                    return Err(Error::NotSymmetric {
                        what: "policy covariance",
                        timestep: t,
                    });
                }
            }
        }
        Ok(Self {
            gains,
            offsets,
            covariances,
        })
    }

    /// Open-loop policy issuing `command` at every step with isotropic
    /// exploration variance.
    pub fn constant(
        horizon: usize,
        state_dim: usize,
        command: &Action,
        variance: f64,
    ) -> Result<Self> {
        let m = command.len();
        Self::new(
            vec![DMatrix::zeros(m, state_dim); horizon],
            vec![command.clone(); horizon],
            vec![DMatrix::identity(m, m) * variance; horizon],
        )
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    pub fn state_dim(&self) -> usize {
        self.gains.first().map_or(0, |k| k.ncols())
    }

    pub fn action_dim(&self) -> usize {
        self.gains.first().map_or(0, |k| k.nrows())
    }

    fn check_index(&self, t: usize, x: &State) -> Result<()> {
        if t >= self.horizon() {
            return Err(Error::TimestepOutOfRange {
                index: t,
                horizon: self.horizon(),
            });
        }
        check_dim("policy input state", self.state_dim(), x.len())
    }

    /// `K_t x + k_t`.
    pub fn mean_action(&self, t: usize, x: &State) -> Result<Action> {
        self.check_index(t, x)?;
        Ok(&self.gains[t] * x + &self.offsets[t])
    }

    /// `K_t x + k_t + L z` with `L Lᵀ = Σ_t` and `z ~ N(0, I)`.
    pub fn sample_action<R: Rng + ?Sized>(&self, t: usize, x: &State, rng: &mut R) -> Result<Action> {
        let mean = self.mean_action(t, x)?;
        let chol = linalg::cholesky_with_jitter(&self.covariances[t]).ok_or(
            Error::NotPositiveDefinite {
                what: "policy covariance",
                timestep: t,
            },
        )?;
        let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(mean + chol.l() * z)
    }

    pub fn validate_positive_definite(&self) -> Result<()> {
        for (t, cov) in self.covariances.iter().enumerate() {
            if nalgebra::Cholesky::new(cov.clone()).is_none() {
                return Err(Error::NotPositiveDefinite {
                    what: "policy covariance",
                    timestep: t,
                });
            }
        }
        Ok(())
    }
}

/// Runs one episode from the environment's initial state.
///
/// Non-finite next states abort the episode with the failing timestep.
pub fn rollout<E, R>(
    env: &mut E,
    policy: &LinearGaussianPolicy,
    stochastic: bool,
    rng: &mut R,
) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let horizon = env.horizon();
    check_dim("policy horizon", horizon, policy.horizon())?;
    check_dim("policy state dimension", env.state_dim(), policy.state_dim())?;
    check_dim("policy action dimension", env.action_dim(), policy.action_dim())?;

    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut costs = Vec::with_capacity(horizon + 1);
    let mut x = env.initial_state();

    for t in 0..horizon {
        let u = if stochastic {
            policy.sample_action(t, &x, rng)?
        } else {
            policy.mean_action(t, &x)?
        };
        let tr = env.step(&x, &u).map_err(|e| match e {
            Error::Step { reason, .. } => Error::Step { timestep: t, reason },
            other => other,
        })?;
        if !linalg::all_finite_v(&tr.next_state) || !tr.cost.is_finite() {
            return Err(Error::Step {
                timestep: t,
                reason: "non-finite state or cost".into(),
            });
        }
        states.push(x);
        actions.push(u);
        costs.push(tr.cost);
        x = tr.next_state;
    }
    let terminal = env.terminal_cost(&x)?;
    if !terminal.is_finite() {
        return Err(Error::Step {
            timestep: horizon,
            reason: "non-finite terminal cost".into(),
        });
    }
    states.push(x);
    costs.push(terminal);
    Trajectory::new(states, actions, costs)
}
