use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_fit::{collect_samples_around, fit_cost, fit_dynamics, ExplorationConfig};
use crate::trajopt::{rollout, Environment, LinearGaussianPolicy, Trajectory};

use super::dual::{constrained_update, initialize_eta_for_pd, DualState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon_ini: f64,
    /// Applied to ε whenever a candidate is rejected.
    pub epsilon_decrease: f64,
    /// Bottom rung of the η ladder at every iteration.
    pub eta_initial: f64,
    pub eta_growth: f64,
    pub max_dual_iterations: usize,
    pub max_iterations: usize,
    /// Stop once the evaluated distance drops below this, meters. Zero never
    /// stops early.
    pub threshold: f64,
    /// Consecutive failed iterations (fit, dual or rollout) before aborting.
    pub max_failures: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon_ini: 1e4,
            epsilon_decrease: 0.5,
            eta_initial: 1e-6,
            eta_growth: 10.0,
            max_dual_iterations: 16,
            max_iterations: 16,
            threshold: 1e-4,
            max_failures: 3,
        }
    }
}

impl SolverConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.epsilon_ini > 0.0) {
            p.push("epsilon_ini must be positive".to_string());
        }
        if !(self.epsilon_decrease > 0.0 && self.epsilon_decrease < 1.0) {
            p.push("epsilon_decrease must lie in (0, 1)".to_string());
        }
        if !(self.eta_initial > 0.0) || !self.eta_initial.is_finite() {
            p.push("eta_initial must be positive".to_string());
        }
        if !(self.eta_growth > 1.0) {
            p.push("eta_growth must exceed 1".to_string());
        }
        if self.max_dual_iterations == 0 {
            p.push("max_dual_iterations must be positive".to_string());
        }
        if self.max_iterations == 0 {
            p.push("max_iterations must be positive".to_string());
        }
        if !(self.threshold >= 0.0) {
            p.push("threshold must be non-negative".to_string());
        }
        if self.max_failures == 0 {
            p.push("max_failures must be positive".to_string());
        }
        p
    }
}

/// One outer iteration. Distance and cost describe the incumbent policy
/// after the accept/reject decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub distance_mm: Option<f64>,
    pub cost: f64,
    pub eta: f64,
    /// ε in force for this iteration's update.
    pub epsilon: f64,
    pub accepted: bool,
    pub kl: Option<f64>,
    pub candidate_cost: Option<f64>,
    pub failure: Option<String>,
}

/// Either the iteration at which the threshold was crossed, or what was left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Converged { iterations: usize },
    Remaining { distance_mm: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub initial_distance_mm: Option<f64>,
    pub initial_cost: f64,
    pub records: Vec<IterationRecord>,
    pub outcome: Outcome,
    pub policy: LinearGaussianPolicy,
    /// Deterministic rollout of the final incumbent.
    pub trajectory: Trajectory,
    /// Set when the session stopped on repeated failures.
    pub aborted: Option<String>,
}

impl SessionResult {
    pub fn final_distance_mm(&self) -> Option<f64> {
        self.records
            .last()
            .map_or(self.initial_distance_mm, |r| r.distance_mm)
    }

    pub fn converged(&self) -> bool {
        matches!(self.outcome, Outcome::Converged { .. })
    }
}

struct Evaluated {
    trajectory: Trajectory,
    cost: f64,
    distance: Option<f64>,
}

fn evaluate<E, F, R>(make_env: &F, policy: &LinearGaussianPolicy, rng: &mut R) -> Result<Evaluated>
where
    E: Environment,
    F: Fn(u64) -> E + Sync,
    R: Rng + ?Sized,
{
    let seed = rng.random::<u64>();
    let mut env = make_env(seed);
    let trajectory = rollout(&mut env, policy, false, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let distance = env.distance(trajectory.final_state());
    Ok(Evaluated {
        cost: trajectory.total_cost(),
        distance,
        trajectory,
    })
}

/// Learning loop: explore, fit local models, take a KL-bounded step and keep
/// it only if the deterministic evaluation improves; otherwise shrink ε.
pub fn ilqg_outer_loop<E, F, R>(
    make_env: &F,
    initial_policy: LinearGaussianPolicy,
    explore: &ExplorationConfig,
    solver: &SolverConfig,
    rng: &mut R,
) -> Result<SessionResult>
where
    E: Environment,
    F: Fn(u64) -> E + Sync,
    R: Rng + ?Sized,
{
    let mut problems = explore.problems();
    problems.extend(solver.problems());
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    initial_policy.validate_positive_definite()?;

    let mut incumbent = initial_policy;
    let mut current = evaluate(make_env, &incumbent, rng)?;
    let initial_distance_mm = current.distance.map(|d| d * 1e3);
    let initial_cost = current.cost;
    let mut epsilon = solver.epsilon_ini;
    let mut records = Vec::with_capacity(solver.max_iterations);
    let mut failures = 0;
    let mut aborted = None;
    let mut outcome = None;

    for iteration in 1..=solver.max_iterations {
        let step = (|| -> Result<_> {
            let nominal = current.trajectory.to_nominal();
            let samples = collect_samples_around(make_env, &incumbent, nominal.clone(), explore, rng)?;
            let dynamics = fit_dynamics(&samples, explore)?;
            let cost = fit_cost(&samples, explore)?;
            let eta0 = initialize_eta_for_pd(&dynamics, &cost, &incumbent, &nominal, solver.eta_initial)?;
            let dual = DualState {
                eta: eta0,
                epsilon,
                growth: solver.eta_growth,
                max_iterations: solver.max_dual_iterations,
            };
            constrained_update(&dynamics, &cost, &incumbent, &nominal, &dual)
        })();

        let mut record = IterationRecord {
            iteration,
            distance_mm: None,
            cost: current.cost,
            eta: f64::NAN,
            epsilon,
            accepted: false,
            kl: None,
            candidate_cost: None,
            failure: None,
        };

        match step {
            Ok(update) if update.satisfied => {
                record.eta = update.eta;
                record.kl = Some(update.kl);
                let candidate = evaluate(make_env, &update.policy, rng)?;
                record.candidate_cost = Some(candidate.cost);
                if candidate.cost < current.cost {
                    record.accepted = true;
                    incumbent = update.policy;
                    current = candidate;
                } else {
                    epsilon *= solver.epsilon_decrease;
                }
                failures = 0;
            }
            Ok(update) => {
                record.eta = update.eta;
                record.kl = Some(update.kl);
                record.failure = Some(format!(
                    "KL {:.3e} above ε {:.3e} after {} dual steps",
                    update.kl,
                    epsilon,
                    update.ladder.len()
                ));
                failures += 1;
            }
            Err(e) => {
                record.failure = Some(e.to_string());
                failures += 1;
            }
        }
        record.cost = current.cost;
        record.distance_mm = current.distance.map(|d| d * 1e3);
        records.push(record);

        if current.distance.is_some_and(|d| d < solver.threshold) {
            outcome = Some(Outcome::Converged { iterations: iteration });
            break;
        }
        if failures >= solver.max_failures {
            aborted = records.last().and_then(|r| r.failure.clone());
            break;
        }
    }

    Ok(SessionResult {
        initial_distance_mm,
        initial_cost,
        outcome: outcome.unwrap_or(Outcome::Remaining {
            distance_mm: current.distance.map(|d| d * 1e3),
        }),
        records,
        policy: incumbent,
        trajectory: current.trajectory,
        aborted,
    })
}
