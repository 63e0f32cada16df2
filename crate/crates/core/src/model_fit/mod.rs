//! Local models around the nominal trajectory, learnt from exploration
//! rollouts: linear regression for the dynamics and second-order polynomial
//! regression for the cost.
//!
//! Every regression is centered on the nominal point `[x̄_t; ū_t]`, so the
//! fitted coefficients are directly the Taylor terms of
//! `x_{t+1} ≈ x̄_{t+1} + F_xu δxu` and `l ≈ l̄ + L_xu δxu + ½ δxuᵀ L_xuxu δxu`.
//! Samples from neighboring timesteps can be pooled into a timestep's fit;
//! they are centered on that timestep's nominal, which assumes the system
//! itself does not depend on time.

pub mod regression;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::trajopt::{rollout, Action, Environment, LinearGaussianPolicy, NominalTrajectory, State};

use regression::ridge_least_squares;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationConfig {
    /// Number of stochastic rollouts per iteration.
    pub samples: usize,
    /// Initial exploration variance on every action coordinate, in squared
    /// action units.
    pub cov_ini: f64,
    /// Ridge added to the unit-RMS feature Gram diagonal (never to the intercept).
    pub ridge: f64,
    /// Neighboring timesteps on each side whose samples join a timestep's fit.
    pub pooling: usize,
    /// Inputs of the stage-cost regression.
    pub cost_inputs: CostInputs,
}

/// Which variables the per-timestep cost quadratic is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostInputs {
    /// Quadratic in the state only; the action block of the model is zero.
    #[default]
    State,
    /// Full quadratic in the stacked state and action.
    StateAction,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            samples: 40,
            cov_ini: 1.0,
            ridge: 1e-6,
            pooling: 0,
            cost_inputs: CostInputs::default(),
        }
    }
}

impl ExplorationConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.samples < 2 {
            p.push("exploration samples must be at least 2".to_string());
        }
        if !(self.cov_ini > 0.0) || !self.cov_ini.is_finite() {
            p.push("cov_ini must be positive".to_string());
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            p.push("ridge must be non-negative".to_string());
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTuple {
    pub state: State,
    pub action: Action,
    pub next_state: State,
    pub cost: f64,
}

/// Exploration data grouped by timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub nominal: NominalTrajectory,
    /// `steps[t]` holds one tuple per rollout.
    pub steps: Vec<Vec<SampleTuple>>,
    /// Final state and terminal cost of each rollout.
    pub terminal: Vec<(State, f64)>,
}

impl SampleSet {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn rollouts(&self) -> usize {
        self.terminal.len()
    }

    /// Timesteps `t ± pooling`, shifted inwards at the ends of the horizon so
    /// every window spans the same number of steps when the horizon allows.
    fn window(&self, t: usize, pooling: usize) -> impl Iterator<Item = &SampleTuple> {
        let last = self.horizon() - 1;
        let width = (2 * pooling).min(last);
        let lo = t.saturating_sub(pooling).min(last - width);
        self.steps[lo..=lo + width].iter().flatten()
    }
}

/// Runs `config.samples` stochastic rollouts of `policy` and groups the
/// tuples by timestep. The nominal is the deterministic rollout of the
/// policy mean.
pub fn collect_samples<E, F, R>(
    make_env: &F,
    policy: &LinearGaussianPolicy,
    config: &ExplorationConfig,
    rng: &mut R,
) -> Result<SampleSet>
where
    E: Environment,
    F: Fn(u64) -> E + Sync,
    R: Rng + ?Sized,
{
    let nominal_seed = rng.random::<u64>();
    let mut env = make_env(nominal_seed);
    let nominal = rollout(&mut env, policy, false, &mut ChaCha8Rng::seed_from_u64(nominal_seed))?;
    collect_samples_around(make_env, policy, nominal.to_nominal(), config, rng)
}

/// As [`collect_samples`] with a nominal the caller already has.
pub fn collect_samples_around<E, F, R>(
    make_env: &F,
    policy: &LinearGaussianPolicy,
    nominal: NominalTrajectory,
    config: &ExplorationConfig,
    rng: &mut R,
) -> Result<SampleSet>
where
    E: Environment,
    F: Fn(u64) -> E + Sync,
    R: Rng + ?Sized,
{
    policy.validate_positive_definite()?;
    check_dim("nominal horizon", policy.horizon(), nominal.horizon())?;
    let seeds: Vec<u64> = (0..config.samples).map(|_| rng.random()).collect();
    let trajectories = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let mut env = make_env(seed);
            let mut local = ChaCha8Rng::seed_from_u64(seed);
            rollout(&mut env, policy, true, &mut local).map_err(|e| Error::Rollout {
                rollout: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let horizon = policy.horizon();
    let mut steps = vec![Vec::with_capacity(config.samples); horizon];
    let mut terminal = Vec::with_capacity(config.samples);
    for traj in trajectories {
        for t in 0..horizon {
            steps[t].push(SampleTuple {
                state: traj.states[t].clone(),
                action: traj.actions[t].clone(),
                next_state: traj.states[t + 1].clone(),
                cost: traj.costs[t],
            });
        }
        terminal.push((traj.states[horizon].clone(), traj.costs[horizon]));
    }
    Ok(SampleSet {
        nominal,
        steps,
        terminal,
    })
}

/// `x_{t+1} ≈ bias + F_xu ([x; u] − [x̄_t; ū_t])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStep {
    /// `n × (n + m)`.
    pub f_xu: DMatrix<f64>,
    pub bias: DVector<f64>,
    /// RMS of the training residuals.
    pub residual_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDynamicsModel {
    pub nominal: NominalTrajectory,
    pub steps: Vec<LinearStep>,
}

impl LinearDynamicsModel {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn state_dim(&self) -> usize {
        self.nominal.state_dim()
    }

    pub fn predict(&self, t: usize, x: &State, u: &Action) -> DVector<f64> {
        let step = &self.steps[t];
        let delta = linalg::stack(x, u) - self.nominal.point(t);
        &step.bias + &step.f_xu * delta
    }
}

/// `c + gᵀδ + ½ δᵀ H δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub constant: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Quadratic {
    pub fn zeros(dim: usize) -> Self {
        Self {
            constant: 0.0,
            gradient: DVector::zeros(dim),
            hessian: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn eval(&self, delta: &DVector<f64>) -> f64 {
        self.constant + self.gradient.dot(delta) + 0.5 * delta.dot(&(&self.hessian * delta))
    }

    /// Same quadratic over the leading coordinates of a `dim`-vector, flat in
    /// the rest.
    pub fn embedded(&self, dim: usize) -> Self {
        let p = self.dim();
        let mut q = Self::zeros(dim);
        q.constant = self.constant;
        q.gradient.rows_mut(0, p).copy_from(&self.gradient);
        q.hessian.view_mut((0, 0), (p, p)).copy_from(&self.hessian);
        q
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            constant: self.constant * s,
            gradient: &self.gradient * s,
            hessian: &self.hessian * s,
        }
    }
}

/// Per-step expansions over `δxu` plus a terminal expansion over `δx_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCostModel {
    pub nominal: NominalTrajectory,
    pub steps: Vec<Quadratic>,
    pub terminal: Quadratic,
}

impl QuadraticCostModel {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Model prediction of the total cost of a trajectory.
    pub fn predict_total(&self, states: &[State], actions: &[Action]) -> f64 {
        let mut total = 0.0;
        for (t, q) in self.steps.iter().enumerate() {
            let d = linalg::stack(&states[t], &actions[t]) - self.nominal.point(t);
            total += q.eval(&d);
        }
        let last = self.horizon();
        total + self.terminal.eval(&(&states[last] - &self.nominal.states[last]))
    }
}

/// Number of monomials of degree ≤ 2 in `dim` variables.
pub fn quadratic_feature_count(dim: usize) -> usize {
    1 + dim + dim * (dim + 1) / 2
}

fn quadratic_features(delta: &DVector<f64>, out: &mut [f64]) {
    let p = delta.len();
    out[0] = 1.0;
    out[1..=p].copy_from_slice(delta.as_slice());
    let mut k = p + 1;
    for i in 0..p {
        for j in i..p {
            out[k] = delta[i] * delta[j];
            k += 1;
        }
    }
}

/// Maps monomial coefficients back to `(c, g, H)` with `H` exactly symmetric.
fn quadratic_from_coefficients(coef: &[f64], p: usize) -> Quadratic {
    let mut q = Quadratic::zeros(p);
    q.constant = coef[0];
    q.gradient.copy_from_slice(&coef[1..=p]);
    let mut k = p + 1;
    for i in 0..p {
        for j in i..p {
            if i == j {
                q.hessian[(i, i)] = 2.0 * coef[k];
            } else {
                q.hessian[(i, j)] = coef[k];
                q.hessian[(j, i)] = coef[k];
            }
            k += 1;
        }
    }
    q
}

fn fit_quadratic(points: &[(DVector<f64>, f64)], ridge: f64, timestep: usize) -> Result<Quadratic> {
    let p = points[0].0.len();
    let features = quadratic_feature_count(p);
    let mut design = DMatrix::zeros(points.len(), features);
    let mut targets = DMatrix::zeros(points.len(), 1);
    let mut row = vec![0.0; features];
    for (i, (delta, y)) in points.iter().enumerate() {
        quadratic_features(delta, &mut row);
        design.row_mut(i).iter_mut().zip(&row).for_each(|(d, v)| *d = *v);
        targets[(i, 0)] = *y;
    }
    let fit = ridge_least_squares(&design, &targets, ridge).ok_or(Error::SingularFit { timestep })?;
    Ok(quadratic_from_coefficients(fit.coefficients.column(0).as_slice(), p))
}

pub fn fit_dynamics(samples: &SampleSet, config: &ExplorationConfig) -> Result<LinearDynamicsModel> {
    let horizon = samples.horizon();
    let nominal = &samples.nominal;
    check_dim("sample horizon", nominal.horizon(), horizon)?;
    let steps = (0..horizon)
        .into_par_iter()
        .map(|t| {
            let center = nominal.point(t);
            let rows: Vec<&SampleTuple> = samples.window(t, config.pooling).collect();
            if rows.len() < 2 {
                return Err(Error::TooFewSamples {
                    timestep: t,
                    available: rows.len(),
                    required: 2,
                });
            }
            let p = center.len();
            let n = rows[0].next_state.len();
            let mut design = DMatrix::zeros(rows.len(), p + 1);
            let mut targets = DMatrix::zeros(rows.len(), n);
            for (i, s) in rows.iter().enumerate() {
                let delta = linalg::stack(&s.state, &s.action) - &center;
                design[(i, 0)] = 1.0;
                design.view_mut((i, 1), (1, p)).copy_from(&delta.transpose());
                targets.row_mut(i).copy_from(&s.next_state.transpose());
            }
            let fit = ridge_least_squares(&design, &targets, config.ridge)
                .ok_or(Error::SingularFit { timestep: t })?;
            let residual = &design * &fit.coefficients - &targets;
            let residual_rms = (residual.norm_squared() / residual.len() as f64).sqrt();
            let coef = fit.coefficients;
            Ok(LinearStep {
                bias: coef.row(0).transpose(),
                f_xu: coef.rows(1, p).transpose(),
                residual_rms,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearDynamicsModel {
        nominal: nominal.clone(),
        steps,
    })
}

pub fn fit_cost(samples: &SampleSet, config: &ExplorationConfig) -> Result<QuadraticCostModel> {
    let horizon = samples.horizon();
    let nominal = &samples.nominal;
    check_dim("sample horizon", nominal.horizon(), horizon)?;
    let steps = (0..horizon)
        .into_par_iter()
        .map(|t| {
            let center = nominal.point(t);
            let points: Vec<(DVector<f64>, f64)> = samples
                .window(t, config.pooling)
                .map(|s| match config.cost_inputs {
                    CostInputs::State => (&s.state - &nominal.states[t], s.cost),
                    CostInputs::StateAction => (linalg::stack(&s.state, &s.action) - &center, s.cost),
                })
                .collect();
            if points.len() < 2 {
                return Err(Error::TooFewSamples {
                    timestep: t,
                    available: points.len(),
                    required: 2,
                });
            }
            let q = fit_quadratic(&points, config.ridge, t)?;
            Ok(match config.cost_inputs {
                CostInputs::State => q.embedded(center.len()),
                CostInputs::StateAction => q,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let x_final = &nominal.states[horizon];
    let points: Vec<(DVector<f64>, f64)> = samples
        .terminal
        .iter()
        .map(|(x, c)| (x - x_final, *c))
        .collect();
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            timestep: horizon,
            available: points.len(),
            required: 2,
        });
    }
    let terminal = fit_quadratic(&points, config.ridge, horizon)?;
    Ok(QuadraticCostModel {
        nominal: nominal.clone(),
        steps,
        terminal,
    })
}
