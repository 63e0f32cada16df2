//! Simulated 7-DOF serial arm used as a black-box positioning task.
//!
//! The learner never sees the kinematic model: it sends target joint angles
//! and receives the next joint angles and a cost computed from the measured
//! end-effector distance to the target.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::{DVector, Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::trajopt::{Action, Environment, State, Transition};

/// One revolute joint in standard Denavit–Hartenberg form:
/// `Rz(θ + theta_offset) · Tz(d) · Tx(a) · Rx(alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhJoint {
    /// Link offset along the previous z axis, meters.
    pub d: f64,
    /// Link length along the new x axis, meters.
    pub a: f64,
    /// Link twist, radians.
    pub alpha: f64,
    #[serde(default)]
    pub theta_offset: f64,
    /// Lower joint limit, radians.
    pub min: f64,
    /// Upper joint limit, radians.
    pub max: f64,
}

impl DhJoint {
    fn transform(&self, theta: f64) -> Isometry3<f64> {
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta + self.theta_offset);
        let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Isometry3::from_parts(Translation3::new(0.0, 0.0, 0.0), rz)
            * Isometry3::from_parts(Translation3::new(self.a, 0.0, self.d), rx)
    }
}

/// Kinematic chain plus joint and rate limits. File schema:
///
/// ```json
/// { "name": "...", "rate_limit": 0.2,
///   "joints": [ { "d": 0.36, "a": 0.0, "alpha": -1.5708, "min": -2.96, "max": 2.96 }, ... ] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmModel {
    #[serde(default)]
    pub name: String,
    pub joints: Vec<DhJoint>,
    /// Maximum joint change per step, radians. Infinite (`null` in the file)
    /// disables the limit.
    #[serde(default = "default_rate_limit", deserialize_with = "limit_or_null")]
    pub rate_limit: f64,
}

fn default_rate_limit() -> f64 {
    0.2
}

fn limit_or_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// End-effector position with a flag telling whether any joint was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkResult {
    pub position: Point3<f64>,
    pub clamped: bool,
}

impl ArmModel {
    /// KUKA LBR iiwa 14 R820, base frame at the first joint axis foot.
    pub fn iiwa14() -> Self {
        let deg = |v: f64| v.to_radians();
        let row = |d: f64, alpha: f64, lim: f64| DhJoint {
            d,
            a: 0.0,
            alpha,
            theta_offset: 0.0,
            min: -deg(lim),
            max: deg(lim),
        };
        Self {
            name: "kuka-lbr-iiwa-14-r820".into(),
            joints: vec![
                row(0.36, -FRAC_PI_2, 170.0),
                row(0.0, FRAC_PI_2, 120.0),
                row(0.42, FRAC_PI_2, 170.0),
                row(0.0, -FRAC_PI_2, 120.0),
                row(0.4, -FRAC_PI_2, 170.0),
                row(0.0, FRAC_PI_2, 120.0),
                row(0.126, 0.0, 175.0),
            ],
            rate_limit: default_rate_limit(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.joints.is_empty() {
            problems.push("arm has no joints".to_string());
        }
        for (i, j) in self.joints.iter().enumerate() {
            if ![j.d, j.a, j.alpha, j.theta_offset].iter().all(|v| v.is_finite()) {
                problems.push(format!("joint {i}: non-finite DH parameter"));
            }
            if j.d < 0.0 || j.a < 0.0 {
                problems.push(format!("joint {i}: link offsets must be non-negative"));
            }
            if !(j.min < j.max) {
                problems.push(format!("joint {i}: min limit must be below max"));
            }
        }
        if !(self.rate_limit > 0.0) {
            problems.push("rate_limit must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Upper bound on the end-effector distance from the base.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.d.abs() + j.a.abs()).sum()
    }

    pub fn clamp_to_limits(&self, q: &State) -> (State, bool) {
        let mut clamped = false;
        let out = DVector::from_iterator(
            q.len(),
            q.iter().zip(&self.joints).map(|(v, j)| {
                let c = v.clamp(j.min, j.max);
                clamped |= c != *v;
                c
            }),
        );
        (out, clamped)
    }

    pub fn fk_position(&self, q: &State) -> Result<FkResult> {
        check_dim("joint vector", self.joint_count(), q.len())?;
        let (q, clamped) = self.clamp_to_limits(q);
        let pose = self
            .joints
            .iter()
            .zip(q.iter())
            .fold(Isometry3::identity(), |acc, (j, &theta)| acc * j.transform(theta));
        Ok(FkResult {
            position: Point3::from(pose.translation.vector),
            clamped,
        })
    }
}

/// Parameters of `l(d) = d² + v ln(d² + α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub v: f64,
    pub alpha: f64,
    /// Cartesian target, meters.
    pub target: Point3<f64>,
    /// Length in meters of one unit of the `d` that enters `l`, so `v` and
    /// `α` are in squared units of it.
    #[serde(default = "default_unit")]
    pub unit: f64,
}

fn default_unit() -> f64 {
    1e-3
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.v >= 0.0) || !self.v.is_finite() {
            problems.push("cost v must be finite and non-negative".to_string());
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            problems.push("cost alpha must be positive".to_string());
        }
        if !(self.unit > 0.0) || !self.unit.is_finite() {
            problems.push("cost unit must be positive".to_string());
        }
        if !self.target.iter().all(|c| c.is_finite()) {
            problems.push("target must be finite".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// `d² + v ln(d² + α)` with `d` already in cost units.
pub fn task_cost(params: &CostParams, d: f64) -> f64 {
    let d2 = d * d;
    d2 + params.v * (d2 + params.alpha).ln()
}

impl CostParams {
    /// Task cost of a distance given in meters.
    pub fn cost_at(&self, distance: f64) -> f64 {
        task_cost(self, distance / self.unit)
    }
}

/// What the arm's sensors report after a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: State,
    /// Measured end-effector distance to the target, meters.
    pub distance: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub initial_state: State,
    pub horizon: usize,
    /// Fraction of the commanded displacement achieved in one step.
    pub lag: f64,
    /// Standard deviation of the position sensor, meters, per axis.
    pub sensor_noise_std: f64,
}

impl EnvConfig {
    pub fn validate(&self, joint_count: usize) -> Result<()> {
        let mut problems = Vec::new();
        if self.initial_state.len() != joint_count {
            problems.push(format!(
                "initial state has {} joints, arm has {joint_count}",
                self.initial_state.len()
            ));
        }
        if self.horizon < 1 {
            problems.push("horizon must be at least 1".to_string());
        }
        if !(self.lag > 0.0 && self.lag <= 1.0) {
            problems.push("lag must lie in (0, 1]".to_string());
        }
        if !(self.sensor_noise_std >= 0.0) || !self.sensor_noise_std.is_finite() {
            problems.push("sensor noise std must be finite and non-negative".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_state: DVector::zeros(7),
            horizon: 10,
            lag: 0.9,
            sensor_noise_std: 0.0,
        }
    }
}

/// Position-commanded arm with first-order lag and rate limit.
///
/// The stage cost of `(x_t, u_t)` is the task cost measured at `x_t`, and the
/// terminal cost is the one measured at `x_T`, so every visited pose is
/// charged exactly once.
#[derive(Debug, Clone)]
pub struct ArmEnvironment {
    model: ArmModel,
    config: EnvConfig,
    cost: CostParams,
    noise: Option<(Normal<f64>, ChaCha8Rng)>,
}

impl ArmEnvironment {
    pub fn new(model: ArmModel, config: EnvConfig, cost: CostParams, noise_seed: u64) -> Result<Self> {
        model.validate()?;
        config.validate(model.joint_count())?;
        cost.validate()?;
        let noise = if config.sensor_noise_std > 0.0 {
            let normal = Normal::new(0.0, config.sensor_noise_std)
                .map_err(|e| Error::Config(vec![e.to_string()]))?;
            Some((normal, ChaCha8Rng::seed_from_u64(noise_seed)))
        } else {
            None
        };
        Ok(Self {
            model,
            config,
            cost,
            noise,
        })
    }

    /// Same arm with an independent sensor-noise stream.
    pub fn reseeded(&self, noise_seed: u64) -> Self {
        let mut env = self.clone();
        if let Some((_, rng)) = env.noise.as_mut() {
            *rng = ChaCha8Rng::seed_from_u64(noise_seed);
        }
        env
    }

    pub fn model(&self) -> &ArmModel {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn cost_params(&self) -> &CostParams {
        &self.cost
    }

    /// Lag, then the per-step rate limit on the lagged displacement, then
    /// joint limits.
    pub fn transition(&self, current: &State, action: &Action) -> Result<State> {
        check_dim("current joints", self.model.joint_count(), current.len())?;
        check_dim("commanded joints", self.model.joint_count(), action.len())?;
        if !action.iter().all(|v| v.is_finite()) {
            return Err(Error::Step {
                timestep: 0,
                reason: "non-finite action".into(),
            });
        }
        let rate = self.model.rate_limit;
        let next = DVector::from_iterator(
            current.len(),
            current
                .iter()
                .zip(action.iter())
                .zip(&self.model.joints)
                .map(|((x, u), j)| {
                    let step = (self.config.lag * (u - x)).clamp(-rate, rate);
                    (x + step).clamp(j.min, j.max)
                }),
        );
        Ok(next)
    }

    /// Distance from the end effector at `q` to the target as the sensor
    /// reports it.
    pub fn measure(&mut self, q: &State) -> Result<f64> {
        let fk = self.model.fk_position(q)?;
        let mut offset = fk.position - self.cost.target;
        if let Some((normal, rng)) = self.noise.as_mut() {
            for c in offset.iter_mut() {
                *c += normal.sample(rng);
            }
        }
        Ok(offset.norm())
    }

    pub fn observe(&mut self, q: State) -> Result<Observation> {
        let distance = self.measure(&q)?;
        Ok(Observation {
            cost: self.cost.cost_at(distance),
            state: q,
            distance,
        })
    }

    pub fn env_step(&mut self, current: &State, action: &Action) -> Result<Observation> {
        let next = self.transition(current, action)?;
        self.observe(next)
    }
}

impl Environment for ArmEnvironment {
    fn state_dim(&self) -> usize {
        self.model.joint_count()
    }

    fn action_dim(&self) -> usize {
        self.model.joint_count()
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn initial_state(&self) -> State {
        self.config.initial_state.clone()
    }

    fn step(&mut self, state: &State, action: &Action) -> Result<Transition> {
        let next = self.transition(state, action)?;
        let here = self.measure(state)?;
        Ok(Transition {
            next_state: next,
            cost: self.cost.cost_at(here),
        })
    }

    fn terminal_cost(&mut self, state: &State) -> Result<f64> {
        let d = self.measure(state)?;
        Ok(self.cost.cost_at(d))
    }

    fn distance(&mut self, state: &State) -> Option<f64> {
        self.measure(state).ok()
    }
}
