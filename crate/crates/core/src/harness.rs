//! Configuration files, single sessions, parameter sweeps and their output
//! tables.
//!
//! User-facing units are millimeters for positions and degrees for joint
//! angles; `cov_ini` is in squared degrees. Everything is converted to meters
//! and radians before it reaches the library.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Point3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::{ArmEnvironment, ArmModel, CostParams, EnvConfig};
use crate::error::{Error, Result};
use crate::ilqg::{backward_pass, ilqg_outer_loop, Outcome, SessionResult, SolverConfig};
use crate::model_fit::{
    collect_samples, fit_cost, fit_dynamics, CostInputs, ExplorationConfig, LinearDynamicsModel,
    QuadraticCostModel, SampleSet,
};
use crate::oracles::{riccati_lqr, LQProblem};
use crate::trajopt::LinearGaussianPolicy;

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub initial_state_deg: Vec<f64>,
    pub horizon: usize,
    pub lag: f64,
    pub sensor_noise_std_mm: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            initial_state_deg: vec![0.0; 7],
            horizon: 10,
            lag: 0.9,
            sensor_noise_std_mm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationSection {
    pub samples: usize,
    /// Squared degrees.
    pub cov_ini: f64,
    pub ridge: f64,
    pub pooling: usize,
    pub cost_inputs: CostInputs,
}

impl Default for ExplorationSection {
    fn default() -> Self {
        let d = ExplorationConfig::default();
        Self {
            samples: d.samples,
            cov_ini: 1.0,
            ridge: d.ridge,
            pooling: d.pooling,
            cost_inputs: d.cost_inputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub epsilon_ini: f64,
    pub epsilon_decrease: f64,
    pub eta_initial: f64,
    pub eta_growth: f64,
    pub max_dual_iterations: usize,
    pub max_iterations: usize,
    pub threshold_mm: f64,
    pub max_failures: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            epsilon_ini: d.epsilon_ini,
            epsilon_decrease: d.epsilon_decrease,
            eta_initial: d.eta_initial,
            eta_growth: d.eta_growth,
            max_dual_iterations: d.max_dual_iterations,
            max_iterations: d.max_iterations,
            threshold_mm: d.threshold * 1e3,
            max_failures: d.max_failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    /// Square millimeters, as is `alpha`; the cost sees distances in mm.
    pub v: f64,
    pub alpha: f64,
    pub target_mm: [f64; 3],
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            v: 0.1,
            alpha: 1e-7,
            target_mm: [500.0, 500.0, 500.0],
        }
    }
}

/// One learning session on the simulated arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Arm model file; the built-in iiwa 14 chain when absent.
    pub arm_model: Option<PathBuf>,
    pub env: EnvSection,
    pub exploration: ExplorationSection,
    pub solver: SolverSection,
    pub cost: CostSection,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            arm_model: None,
            env: EnvSection::default(),
            exploration: ExplorationSection::default(),
            solver: SolverSection::default(),
            cost: CostSection::default(),
            seed: 0,
        }
    }
}

/// Library-level pieces of a validated [`SessionConfig`].
#[derive(Debug, Clone)]
pub struct ResolvedSession {
    pub arm: ArmEnvironment,
    pub exploration: ExplorationConfig,
    pub solver: SolverConfig,
    pub initial_policy: LinearGaussianPolicy,
    pub seed: u64,
}

fn collect_config_errors(problems: &mut Vec<String>, r: Result<()>) {
    match r {
        Ok(()) => {}
        Err(Error::Config(list)) => problems.extend(list),
        Err(e) => problems.push(e.to_string()),
    }
}

impl SessionConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads a config file. A relative `arm_model` path is taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        config.anchor_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    fn anchor_paths(&mut self, dir: &Path) {
        if let Some(p) = self.arm_model.as_mut() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn exploration_config(&self) -> ExplorationConfig {
        ExplorationConfig {
            samples: self.exploration.samples,
            cov_ini: self.exploration.cov_ini * DEG * DEG,
            ridge: self.exploration.ridge,
            pooling: self.exploration.pooling,
            cost_inputs: self.exploration.cost_inputs,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            epsilon_ini: s.epsilon_ini,
            epsilon_decrease: s.epsilon_decrease,
            eta_initial: s.eta_initial,
            eta_growth: s.eta_growth,
            max_dual_iterations: s.max_dual_iterations,
            max_iterations: s.max_iterations,
            threshold: s.threshold_mm * 1e-3,
            max_failures: s.max_failures,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            initial_state: DVector::from_iterator(
                self.env.initial_state_deg.len(),
                self.env.initial_state_deg.iter().map(|d| d * DEG),
            ),
            horizon: self.env.horizon,
            lag: self.env.lag,
            sensor_noise_std: self.env.sensor_noise_std_mm * 1e-3,
        }
    }

    pub fn cost_params(&self) -> CostParams {
        let [x, y, z] = self.cost.target_mm;
        CostParams {
            v: self.cost.v,
            alpha: self.cost.alpha,
            target: Point3::new(x, y, z) * 1e-3,
            unit: 1e-3,
        }
    }

    /// Checks every section and reports all problems together.
    pub fn resolve(&self) -> Result<ResolvedSession> {
        let mut problems = Vec::new();
        let model = match &self.arm_model {
            Some(path) => ArmModel::load(path),
            None => Ok(ArmModel::iiwa14()),
        };
        let model = match model {
            Ok(m) => {
                collect_config_errors(&mut problems, m.validate());
                Some(m)
            }
            Err(e) => {
                problems.push(format!("arm model: {e}"));
                None
            }
        };
        let env = self.env_config();
        if let Some(m) = &model {
            collect_config_errors(&mut problems, env.validate(m.joint_count()));
        }
        let cost = self.cost_params();
        collect_config_errors(&mut problems, cost.validate());
        let exploration = self.exploration_config();
        problems.extend(exploration.problems());
        let solver = self.solver_config();
        problems.extend(solver.problems().into_iter().map(|p| p.replace("threshold", "threshold_mm")));
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }

        let model = model.expect("model checked above");
        let initial_policy = LinearGaussianPolicy::constant(
            env.horizon,
            env.initial_state.len(),
            &env.initial_state,
            exploration.cov_ini,
        )?;
        let arm = ArmEnvironment::new(model, env, cost, self.seed)?;
        Ok(ResolvedSession {
            arm,
            exploration,
            solver,
            initial_policy,
            seed: self.seed,
        })
    }
}

/// Runs one learning session. Starts from the "no move" controller: zero
/// gains, offsets equal to the initial joint angles.
pub fn run_session(config: &SessionConfig) -> Result<SessionResult> {
    let resolved = config.resolve()?;
    let prototype = resolved.arm;
    let make_env = |seed: u64| prototype.reseeded(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(resolved.seed);
    ilqg_outer_loop(
        &make_env,
        resolved.initial_policy,
        &resolved.exploration,
        &resolved.solver,
        &mut rng,
    )
}

/// Samples and local models around a policy, for inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDump {
    pub samples: SampleSet,
    pub dynamics: LinearDynamicsModel,
    pub cost: QuadraticCostModel,
}

/// Explores around `policy` once and fits both local models.
pub fn dump_models(config: &SessionConfig, policy: &LinearGaussianPolicy) -> Result<ModelDump> {
    let resolved = config.resolve()?;
    let prototype = resolved.arm;
    let make_env = |seed: u64| prototype.reseeded(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(resolved.seed ^ 0x6d6f_6465_6c73);
    let samples = collect_samples(&make_env, policy, &resolved.exploration, &mut rng)?;
    let dynamics = fit_dynamics(&samples, &resolved.exploration)?;
    let cost = fit_cost(&samples, &resolved.exploration)?;
    Ok(ModelDump {
        samples,
        dynamics,
        cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Settings shared by every cell; the four swept values override it.
    pub base: SessionConfig,
    pub cov_ini: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: Vec<f64>,
    pub eps_ini: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: SessionConfig::default(),
            cov_ini: vec![1.0, 10.0, 100.0],
            v: vec![0.1, 1.0, 10.0],
            alpha: vec![1e-3, 1e-5, 1e-7],
            eps_ini: vec![100.0, 1000.0, 10000.0],
            seeds: vec![0, 1, 2],
        }
    }
}

impl SweepConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        config.base.anchor_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn cell_count(&self) -> usize {
        self.cov_ini.len() * self.v.len() * self.alpha.len() * self.eps_ini.len()
    }

    fn cell_config(&self, key: CellKey, seed: u64) -> SessionConfig {
        let mut c = self.base.clone();
        c.exploration.cov_ini = self.cov_ini[key.0];
        c.cost.v = self.v[key.1];
        c.cost.alpha = self.alpha[key.2];
        c.solver.epsilon_ini = self.eps_ini[key.3];
        c.seed = seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, list) in [
            ("cov_ini", &self.cov_ini),
            ("v", &self.v),
            ("alpha", &self.alpha),
            ("eps_ini", &self.eps_ini),
        ] {
            if list.is_empty() {
                problems.push(format!("{name} list is empty"));
            }
        }
        if self.seeds.is_empty() {
            problems.push("seeds list is empty".to_string());
        }
        if problems.is_empty() {
            // every cell shares the base, so checking the corners of the grid is enough
            for key in self.keys() {
                if let Err(e) = self.cell_config(key, self.seeds[0]).resolve() {
                    collect_config_errors(&mut problems, Err(e));
                }
            }
            problems.sort();
            problems.dedup();
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    fn keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::with_capacity(self.cell_count());
        for c in 0..self.cov_ini.len() {
            for v in 0..self.v.len() {
                for a in 0..self.alpha.len() {
                    for e in 0..self.eps_ini.len() {
                        keys.push((c, v, a, e));
                    }
                }
            }
        }
        keys
    }
}

type CellKey = (usize, usize, usize, usize);

/// Result of one session in a sweep, in table form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CellOutcome {
    Converged { iterations: usize },
    Remaining { remaining_mm: f64 },
    Failed { reason: String },
}

impl CellOutcome {
    fn from_session(r: &Result<SessionResult>) -> Self {
        match r {
            Ok(s) => match s.outcome {
                Outcome::Converged { iterations } => CellOutcome::Converged { iterations },
                Outcome::Remaining { distance_mm: Some(d) } => CellOutcome::Remaining { remaining_mm: d },
                Outcome::Remaining { distance_mm: None } => CellOutcome::Failed {
                    reason: "no distance measurement".into(),
                },
            },
            Err(e) => CellOutcome::Failed { reason: e.to_string() },
        }
    }

    /// Converged beats remaining beats failed; fewer iterations and smaller
    /// distances are better.
    fn rank(&self) -> (u8, f64) {
        match self {
            CellOutcome::Converged { iterations } => (0, *iterations as f64),
            CellOutcome::Remaining { remaining_mm } => (1, *remaining_mm),
            CellOutcome::Failed { .. } => (2, 0.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CellOutcome::Converged { .. } => "converged",
            CellOutcome::Remaining { .. } => "remaining",
            CellOutcome::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub cov_ini: f64,
    pub v: f64,
    pub alpha: f64,
    pub eps_ini: f64,
    /// Median over seeds under the converged < remaining < failed order;
    /// the lower middle element for an even seed count.
    pub median: SeedOutcome,
    pub per_seed: Vec<SeedOutcome>,
}

/// Runs every cell for every seed in parallel. Cells appear in grid order
/// whatever the completion order.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepCell>> {
    config.validate()?;
    let jobs: Vec<(CellKey, u64)> = config
        .keys()
        .into_iter()
        .flat_map(|k| config.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results: BTreeMap<(CellKey, usize), SeedOutcome> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(key, seed))| {
            let r = run_session(&config.cell_config(key, seed));
            let seed_index = i % config.seeds.len();
            (
                (key, seed_index),
                SeedOutcome {
                    seed,
                    outcome: CellOutcome::from_session(&r),
                },
            )
        })
        .collect();

    Ok(config
        .keys()
        .into_iter()
        .map(|key| {
            let per_seed: Vec<SeedOutcome> = (0..config.seeds.len())
                .map(|i| results[&(key, i)].clone())
                .collect();
            let mut sorted = per_seed.clone();
            sorted.sort_by(|a, b| {
                a.outcome
                    .rank()
                    .partial_cmp(&b.outcome.rank())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.seed.cmp(&b.seed))
            });
            let median = sorted[(sorted.len() - 1) / 2].clone();
            SweepCell {
                cov_ini: config.cov_ini[key.0],
                v: config.v[key.1],
                alpha: config.alpha[key.2],
                eps_ini: config.eps_ini[key.3],
                median,
                per_seed,
            }
        })
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub const SESSION_CSV_HEADER: &str = "iteration,distance_mm,cost,eta,epsilon,accepted";
pub const SWEEP_CSV_HEADER: &str = "cov_ini,v,alpha,eps_ini,outcome,iterations,remaining_mm,seed";

/// One row per iteration plus a row 0 for the starting controller.
pub fn write_session_csv<W: Write>(result: &SessionResult, mut out: W) -> Result<()> {
    writeln!(out, "{SESSION_CSV_HEADER}")?;
    writeln!(
        out,
        "0,{},{},,,",
        opt(result.initial_distance_mm),
        result.initial_cost
    )?;
    for r in &result.records {
        let eta = if r.eta.is_finite() { r.eta.to_string() } else { String::new() };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration,
            opt(r.distance_mm),
            r.cost,
            eta,
            r.epsilon,
            r.accepted
        )?;
    }
    Ok(())
}

/// Distance per iteration in millimeters and its base-10 logarithm.
pub fn write_curve_csv<W: Write>(result: &SessionResult, mut out: W) -> Result<()> {
    writeln!(out, "iteration,distance_mm,log10_distance_mm")?;
    let rows = std::iter::once((0, result.initial_distance_mm))
        .chain(result.records.iter().map(|r| (r.iteration, r.distance_mm)));
    for (i, d) in rows {
        let log = d.filter(|d| *d > 0.0).map(f64::log10);
        writeln!(out, "{i},{},{}", opt(d), opt(log))?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for c in cells {
        let (iterations, remaining) = match &c.median.outcome {
            CellOutcome::Converged { iterations } => (iterations.to_string(), String::new()),
            CellOutcome::Remaining { remaining_mm } => (String::new(), remaining_mm.to_string()),
            CellOutcome::Failed { .. } => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.cov_ini,
            c.v,
            c.alpha,
            c.eps_ini,
            c.median.outcome.label(),
            iterations,
            remaining,
            c.median.seed
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Worst discrepancy between the backward pass on exact models and the
/// Riccati recursion over a batch of random problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrCheck {
    pub fixtures: usize,
    pub max_gain_rel_error: f64,
    pub max_offset_rel_error: f64,
}

impl LqrCheck {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_gain_rel_error < tolerance && self.max_offset_rel_error < tolerance
    }
}

fn rel_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-12)
}

/// Compares gains and offsets on `fixtures` random problems with
/// `n ≤ 4`, `m ≤ 2` and horizon 20, expanded about a random open-loop nominal.
pub fn lqr_check(fixtures: usize, seed: u64) -> Result<LqrCheck> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_gain = 0.0_f64;
    let mut worst_offset = 0.0_f64;
    for _ in 0..fixtures {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=2);
        let problem = LQProblem::random(n, m, 20, &mut rng);
        let actions: Vec<DVector<f64>> = (0..problem.horizon)
            .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let nominal = problem.nominal_for(&actions);
        let (dynamics, cost) = problem.expand_about(&nominal);
        let bp = backward_pass(&dynamics, &cost, &nominal)?;
        let oracle = riccati_lqr(&problem)?;
        for t in 0..problem.horizon {
            worst_gain = worst_gain.max(rel_error(&bp.policy.gains[t], &oracle.gains[t]));
            let a = DMatrix::from_column_slice(m, 1, bp.policy.offsets[t].as_slice());
            let b = DMatrix::from_column_slice(m, 1, oracle.offsets[t].as_slice());
            worst_offset = worst_offset.max(rel_error(&a, &b));
        }
    }
    Ok(LqrCheck {
        fixtures,
        max_gain_rel_error: worst_gain,
        max_offset_rel_error: worst_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = SessionConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(SessionConfig::from_json_str(&s).unwrap(), c);
        assert_eq!(SweepConfig::default().cell_count(), 81);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(SessionConfig::from_json_str(r#"{"seed": 1, "colour": 2}"#).is_err());
        assert!(SessionConfig::from_json_str(r#"{"solver": {"threshold": 0.1}}"#).is_err());
        assert!(SweepConfig::from_json_str(r#"{"eps": [1]}"#).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = SessionConfig::from_json_str(r#"{"cost": {"v": 1.0}}"#).unwrap();
        assert_eq!(c.cost.v, 1.0);
        assert_eq!(c.cost.alpha, 1e-7);
        assert_eq!(c.solver.max_iterations, 16);
    }

    #[test]
    fn all_problems_reported_at_once() {
        let mut c = SessionConfig::default();
        c.exploration.samples = 0;
        c.cost.alpha = -1.0;
        c.solver.epsilon_decrease = 2.0;
        c.env.initial_state_deg = vec![0.0; 3];
        match c.resolve() {
            Err(Error::Config(list)) => assert!(list.len() >= 4, "{list:?}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unit_conversions() {
        let mut c = SessionConfig::default();
        c.exploration.cov_ini = 100.0;
        c.env.initial_state_deg[1] = 90.0;
        let r = c.resolve().unwrap();
        assert!((r.exploration.cov_ini - 100.0 * DEG * DEG).abs() < 1e-15);
        assert!((r.initial_policy.offsets[0][1] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((r.solver.threshold - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn lqr_check_passes() {
        let check = lqr_check(5, 3).unwrap();
        assert!(check.passed(1e-6), "{check:?}");
    }

    fn finished(outcome: CellOutcome, seed: u64) -> SeedOutcome {
        SeedOutcome { seed, outcome }
    }

    #[test]
    fn median_ordering() {
        let a = finished(CellOutcome::Converged { iterations: 9 }, 0).outcome.rank();
        let b = finished(CellOutcome::Remaining { remaining_mm: 0.2 }, 1).outcome.rank();
        let c = finished(CellOutcome::Failed { reason: "x".into() }, 2).outcome.rank();
        assert!(a < b && b < c);
    }
}
