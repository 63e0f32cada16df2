use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::model_fit::{LinearDynamicsModel, QuadraticCostModel};
use crate::trajopt::{LinearGaussianPolicy, NominalTrajectory};

/// Quadratic expansion of the state-action cost-to-go at one timestep,
/// over `δxu = [δx; δu]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QExpansion {
    pub constant: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub state_dim: usize,
}

impl QExpansion {
    fn action_dim(&self) -> usize {
        self.gradient.len() - self.state_dim
    }

    pub fn q_x(&self) -> DVector<f64> {
        self.gradient.rows(0, self.state_dim).into_owned()
    }

    pub fn q_u(&self) -> DVector<f64> {
        self.gradient.rows(self.state_dim, self.action_dim()).into_owned()
    }

    pub fn q_xx(&self) -> DMatrix<f64> {
        let n = self.state_dim;
        self.hessian.view((0, 0), (n, n)).into_owned()
    }

    pub fn q_ux(&self) -> DMatrix<f64> {
        let n = self.state_dim;
        self.hessian.view((n, 0), (self.action_dim(), n)).into_owned()
    }

    pub fn q_uu(&self) -> DMatrix<f64> {
        let (n, m) = (self.state_dim, self.action_dim());
        self.hessian.view((n, n), (m, m)).into_owned()
    }
}

/// Quadratic expansion of the state cost-to-go over `δx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueExpansion {
    pub constant: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardPass {
    pub policy: LinearGaussianPolicy,
    /// `T + 1` entries, the last one from the terminal cost.
    pub values: Vec<ValueExpansion>,
    pub q: Vec<QExpansion>,
}

/// Riccati-style backward recursion over local models.
///
/// The dynamics intercept may differ from the nominal next state; the gap
/// `f_t = bias_t − x̄_{t+1}` is carried through the value gradient. Returns
/// [`Error::NotPositiveDefinite`] carrying `t` when `Q_uu` cannot be factored;
/// there is no regularization inside the recursion.
pub fn backward_pass(
    dynamics: &LinearDynamicsModel,
    cost: &QuadraticCostModel,
    nominal: &NominalTrajectory,
) -> Result<BackwardPass> {
    let horizon = nominal.horizon();
    check_dim("dynamics horizon", horizon, dynamics.horizon())?;
    check_dim("cost horizon", horizon, cost.horizon())?;
    let n = nominal.state_dim();
    let m = nominal.action_dim();
    check_dim("terminal cost dimension", n, cost.terminal.dim())?;

    let mut value = ValueExpansion {
        constant: cost.terminal.constant,
        gradient: cost.terminal.gradient.clone(),
        hessian: linalg::symmetrize(&cost.terminal.hessian),
    };
    let mut values = vec![value.clone()];
    let mut qs = Vec::with_capacity(horizon);
    let mut gains = Vec::with_capacity(horizon);
    let mut offsets = Vec::with_capacity(horizon);
    let mut covariances = Vec::with_capacity(horizon);

    for t in (0..horizon).rev() {
        let step = &dynamics.steps[t];
        let local = &cost.steps[t];
        check_dim("dynamics Jacobian rows", n, step.f_xu.nrows())?;
        check_dim("dynamics Jacobian cols", n + m, step.f_xu.ncols())?;
        check_dim("cost model dimension", n + m, local.dim())?;

        let f = &step.f_xu;
        let gap = &step.bias - &nominal.states[t + 1];
        let v_next = &value.gradient + &value.hessian * &gap;

        let mut hessian = &local.hessian + f.transpose() * &value.hessian * f;
        linalg::symmetrize_in_place(&mut hessian);
        let gradient = &local.gradient + f.transpose() * &v_next;
        let constant = local.constant
            + value.constant
            + value.gradient.dot(&gap)
            + 0.5 * gap.dot(&(&value.hessian * &gap));
        let q = QExpansion {
            constant,
            gradient,
            hessian,
            state_dim: n,
        };

        let q_uu = q.q_uu();
        let q_ux = q.q_ux();
        let q_u = q.q_u();
        let chol = Cholesky::new(q_uu).ok_or(Error::NotPositiveDefinite {
            what: "Q_uu",
            timestep: t,
        })?;
        let mut q_uu_inv = chol.inverse();
        linalg::symmetrize_in_place(&mut q_uu_inv);

        let gain = -chol.solve(&q_ux);
        let feedforward = -chol.solve(&q_u);

        // V_xx = Q_xx − Q_uxᵀ Q_uu⁻¹ Q_ux, V_x = Q_x − Q_uxᵀ Q_uu⁻¹ Q_u
        let mut v_xx = q.q_xx() + q_ux.transpose() * &gain;
        linalg::symmetrize_in_place(&mut v_xx);
        let v_x = q.q_x() + q_ux.transpose() * &feedforward;
        let v_0 = q.constant + 0.5 * q_u.dot(&feedforward);
        if !linalg::all_finite_m(&v_xx) || !linalg::all_finite_v(&v_x) {
            return Err(Error::NonFinite("value expansion"));
        }

        let offset = &nominal.actions[t] + &feedforward - &gain * &nominal.states[t];
        gains.push(gain);
        offsets.push(offset);
        covariances.push(q_uu_inv);
        qs.push(q);
        value = ValueExpansion {
            constant: v_0,
            gradient: v_x,
            hessian: v_xx,
        };
        values.push(value.clone());
    }

    gains.reverse();
    offsets.reverse();
    covariances.reverse();
    qs.reverse();
    values.reverse();
    Ok(BackwardPass {
        policy: LinearGaussianPolicy::new(gains, offsets, covariances)?,
        values,
        q: qs,
    })
}
