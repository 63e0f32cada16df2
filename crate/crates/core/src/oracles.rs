//! Independent reference computations used to check the learner: an exact
//! finite-horizon LQR for affine-quadratic problems, and central
//! finite-difference Taylor expansions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model_fit::{LinearDynamicsModel, LinearStep, Quadratic, QuadraticCostModel};
use crate::trajopt::{Action, Environment, LinearGaussianPolicy, NominalTrajectory, State, Transition};

/// `x' = A x + B u + c`, stage cost `½xᵀQx + qᵀx + ½uᵀRu + rᵀu`,
/// terminal cost `½xᵀQ_f x + q_fᵀx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LQProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_lin: DVector<f64>,
    pub r_lin: DVector<f64>,
    pub q_final: DMatrix<f64>,
    pub q_final_lin: DVector<f64>,
    pub horizon: usize,
    pub x0: DVector<f64>,
}

/// Optimal affine policy `u_t = K_t x + k_t` and value `½xᵀP_t x + p_tᵀx + s_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub gains: Vec<DMatrix<f64>>,
    pub offsets: Vec<DVector<f64>>,
    pub value_hessians: Vec<DMatrix<f64>>,
    pub value_gradients: Vec<DVector<f64>>,
    pub value_constants: Vec<f64>,
}

impl RiccatiSolution {
    pub fn optimal_cost(&self, x0: &DVector<f64>) -> f64 {
        0.5 * x0.dot(&(&self.value_hessians[0] * x0)) + self.value_gradients[0].dot(x0) + self.value_constants[0]
    }
}

impl LQProblem {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.q_lin.dot(x) + 0.5 * u.dot(&(&self.r * u)) + self.r_lin.dot(u)
    }

    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q_final * x)) + self.q_final_lin.dot(x)
    }

    /// Random well-posed fixture: `A` scaled to spectral norm ≤ 1.05, cost
    /// Hessians `GᵀG + I`-type, all linear terms in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, horizon: usize, rng: &mut R) -> Self {
        let mut uni = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let mut a = uni(n, n);
        let norm = a.clone().svd(false, false).singular_values.max();
        if norm > 1.05 {
            a *= 1.05 / norm;
        }
        let b = uni(n, m);
        let c = uni(n, 1).column(0).into_owned();
        let g = uni(n, n);
        let q = g.transpose() * g * 0.5 + DMatrix::identity(n, n) * 0.1;
        let h = uni(m, m);
        let r = h.transpose() * h * 0.5 + DMatrix::identity(m, m) * 0.5;
        let gf = uni(n, n);
        let q_final = gf.transpose() * gf + DMatrix::identity(n, n) * 0.1;
        Self {
            a,
            b,
            c,
            q,
            r,
            q_lin: uni(n, 1).column(0).into_owned(),
            r_lin: uni(m, 1).column(0).into_owned(),
            q_final,
            q_final_lin: uni(n, 1).column(0).into_owned(),
            horizon,
            x0: uni(n, 1).column(0).into_owned(),
        }
    }

    /// Exact local models of this problem around `nominal`, in the form the
    /// learner would fit them.
    pub fn expand_about(&self, nominal: &NominalTrajectory) -> (LinearDynamicsModel, QuadraticCostModel) {
        let n = self.state_dim();
        let m = self.action_dim();
        let mut f_xu = DMatrix::zeros(n, n + m);
        f_xu.view_mut((0, 0), (n, n)).copy_from(&self.a);
        f_xu.view_mut((0, n), (n, m)).copy_from(&self.b);
        let mut hessian = DMatrix::zeros(n + m, n + m);
        hessian.view_mut((0, 0), (n, n)).copy_from(&self.q);
        hessian.view_mut((n, n), (m, m)).copy_from(&self.r);

        let mut dyn_steps = Vec::with_capacity(self.horizon);
        let mut cost_steps = Vec::with_capacity(self.horizon);
        for t in 0..self.horizon {
            let x = &nominal.states[t];
            let u = &nominal.actions[t];
            dyn_steps.push(LinearStep {
                f_xu: f_xu.clone(),
                bias: &self.a * x + &self.b * u + &self.c,
                residual_rms: 0.0,
            });
            let mut gradient = DVector::zeros(n + m);
            gradient.rows_mut(0, n).copy_from(&(&self.q * x + &self.q_lin));
            gradient.rows_mut(n, m).copy_from(&(&self.r * u + &self.r_lin));
            cost_steps.push(Quadratic {
                constant: self.stage_cost(x, u),
                gradient,
                hessian: hessian.clone(),
            });
        }
        let xf = &nominal.states[self.horizon];
        let terminal = Quadratic {
            constant: self.terminal_cost(xf),
            gradient: &self.q_final * xf + &self.q_final_lin,
            hessian: self.q_final.clone(),
        };
        (
            LinearDynamicsModel {
                nominal: nominal.clone(),
                steps: dyn_steps,
            },
            QuadraticCostModel {
                nominal: nominal.clone(),
                steps: cost_steps,
                terminal,
            },
        )
    }

    /// Nominal produced by a fixed open-loop action sequence.
    pub fn nominal_for(&self, actions: &[DVector<f64>]) -> NominalTrajectory {
        let mut states = vec![self.x0.clone()];
        for u in actions {
            let x = states.last().unwrap();
            states.push(&self.a * x + &self.b * u + &self.c);
        }
        NominalTrajectory {
            states,
            actions: actions.to_vec(),
        }
    }
}

/// Backward Riccati recursion for the affine-quadratic problem, written
/// directly in `(A, B, c)` form with LU solves.
pub fn riccati_lqr(problem: &LQProblem) -> Result<RiccatiSolution> {
    let n = problem.state_dim();
    let m = problem.action_dim();
    check_dim("B rows", n, problem.b.nrows())?;
    check_dim("R size", m, problem.r.nrows())?;
    if nalgebra::Cholesky::new(problem.r.clone()).is_none() {
        return Err(Error::Usage("R must be positive definite".into()));
    }

    let t_len = problem.horizon;
    let mut gains = vec![DMatrix::zeros(m, n); t_len];
    let mut offsets = vec![DVector::zeros(m); t_len];
    let mut p_mats = vec![DMatrix::zeros(n, n); t_len + 1];
    let mut p_vecs = vec![DVector::zeros(n); t_len + 1];
    let mut consts = vec![0.0; t_len + 1];
    p_mats[t_len] = problem.q_final.clone();
    p_vecs[t_len] = problem.q_final_lin.clone();

    let (a, b, c) = (&problem.a, &problem.b, &problem.c);
    for t in (0..t_len).rev() {
        let p = &p_mats[t + 1];
        let pv = &p_vecs[t + 1];
        let drift = pv + p * c;
        let h_uu = &problem.r + b.transpose() * p * b;
        let h_ux = b.transpose() * p * a;
        let h_u = &problem.r_lin + b.transpose() * &drift;
        let lu = h_uu.clone().lu();
        let k_mat = -lu
            .solve(&h_ux)
            .ok_or_else(|| Error::Usage("singular control Hessian".into()))?;
        let k_vec = -lu
            .solve(&h_u)
            .ok_or_else(|| Error::Usage("singular control Hessian".into()))?;

        let new_p = &problem.q + a.transpose() * p * a + h_ux.transpose() * &k_mat;
        let new_p = (&new_p + new_p.transpose()) * 0.5;
        let new_pv = &problem.q_lin + a.transpose() * &drift + h_ux.transpose() * &k_vec;
        let new_s = consts[t + 1] + 0.5 * c.dot(&(p * c)) + pv.dot(c) + 0.5 * h_u.dot(&k_vec);

        gains[t] = k_mat;
        offsets[t] = k_vec;
        p_mats[t] = new_p;
        p_vecs[t] = new_pv;
        consts[t] = new_s;
    }
    Ok(RiccatiSolution {
        gains,
        offsets,
        value_hessians: p_mats,
        value_gradients: p_vecs,
        value_constants: consts,
    })
}

/// The affine-quadratic problem as a black-box environment.
#[derive(Debug, Clone)]
pub struct LqEnvironment {
    pub problem: LQProblem,
}

impl Environment for LqEnvironment {
    fn state_dim(&self) -> usize {
        self.problem.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.problem.action_dim()
    }

    fn horizon(&self) -> usize {
        self.problem.horizon
    }

    fn initial_state(&self) -> State {
        self.problem.x0.clone()
    }

    fn step(&mut self, x: &State, u: &Action) -> Result<Transition> {
        let p = &self.problem;
        Ok(Transition {
            next_state: &p.a * x + &p.b * u + &p.c,
            cost: p.stage_cost(x, u),
        })
    }

    fn terminal_cost(&mut self, x: &State) -> Result<f64> {
        Ok(self.problem.terminal_cost(x))
    }
}

/// Policy equal to the Riccati solution, with a given covariance.
pub fn riccati_policy(solution: &RiccatiSolution, variance: f64) -> Result<LinearGaussianPolicy> {
    let m = solution.offsets.first().map_or(0, |k| k.len());
    LinearGaussianPolicy::new(
        solution.gains.clone(),
        solution.offsets.clone(),
        vec![DMatrix::identity(m, m) * variance; solution.gains.len()],
    )
}

/// Value, gradient and Hessian of `f` at `point`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffExpansion {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Default step for coordinate `x`: `1e-5 · (1 + |x|)`.
pub fn default_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

/// Central differences with per-coordinate step `step(point_i)`; the Hessian
/// uses central second differences and is symmetrized.
pub fn finite_diff_expansion<F>(f: F, point: &DVector<f64>, step: impl Fn(f64) -> f64) -> Result<FiniteDiffExpansion>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let p = point.len();
    let eval = |z: &DVector<f64>| -> Result<f64> {
        let v = f(z);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("finite-difference evaluation"))
        }
    };
    let h: Vec<f64> = point.iter().map(|x| step(*x)).collect();
    if h.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Usage("finite-difference step must be positive".into()));
    }
    let f0 = eval(point)?;
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut z = point.clone();
        z[i] += si;
        z[j] += sj;
        z
    };

    let mut gradient = DVector::zeros(p);
    let mut hessian = DMatrix::zeros(p, p);
    for i in 0..p {
        let plus = eval(&shifted(i, h[i], i, 0.0))?;
        let minus = eval(&shifted(i, -h[i], i, 0.0))?;
        gradient[i] = (plus - minus) / (2.0 * h[i]);
        hessian[(i, i)] = (plus - 2.0 * f0 + minus) / (h[i] * h[i]);
        for j in (i + 1)..p {
            let pp = eval(&shifted(i, h[i], j, h[j]))?;
            let pm = eval(&shifted(i, h[i], j, -h[j]))?;
            let mp = eval(&shifted(i, -h[i], j, h[j]))?;
            let mm = eval(&shifted(i, -h[i], j, -h[j]))?;
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hessian[(i, j)] = v;
            hessian[(j, i)] = v;
        }
    }
    Ok(FiniteDiffExpansion {
        value: f0,
        gradient,
        hessian,
    })
}
