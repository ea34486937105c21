use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{AgentControl, JointState, StateTrajectory, CONTROL_DIM, STATE_DIM};
use crate::error::Error;
use crate::scalar::Real;

const SYMMETRY_TOL: f64 = 1e-12;

/// Quadratic tracking cost of one player:
/// `½(x−xf)ᵀQ(x−xf) + ½uᵀRu` per stage and `½(x_H−xf)ᵀQf(x_H−xf)` at the end.
///
/// `Q`, `Qf` and `xf` live on the joint state; `R` on the player's own control.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    qf: DMatrix<f64>,
    xf: DVector<f64>,
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= SYMMETRY_TOL * scale))
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

impl QuadraticCost {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, qf: DMatrix<f64>, xf: DVector<f64>) -> Result<Self, Error> {
        let n = xf.len();
        for (name, m, dim) in [("Q", &q, n), ("Qf", &qf, n), ("R", &r, CONTROL_DIM)] {
            Error::check_len(dim, m.nrows())?;
            Error::check_len(dim, m.ncols())?;
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(alloc::format!("{name} has non-finite entries")));
            }
            if !is_symmetric(m) {
                return Err(Error::invalid(alloc::format!("{name} is not symmetric")));
            }
        }
        if !xf.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("xf has non-finite entries"));
        }
        let floor = -SYMMETRY_TOL * q.amax().max(qf.amax()).max(1.0);
        if n > 0 && (min_eigenvalue(&q) < floor || min_eigenvalue(&qf) < floor) {
            return Err(Error::invalid("Q and Qf must be positive semidefinite"));
        }
        if min_eigenvalue(&r) <= 0.0 {
            return Err(Error::invalid("R must be positive definite"));
        }
        Ok(Self { q, r, qf, xf })
    }

    /// The null cost. Every trajectory is optimal for it; used to build
    /// vacuous games.
    pub fn zero(state_dim: usize) -> Self {
        Self {
            q: DMatrix::zeros(state_dim, state_dim),
            r: DMatrix::zeros(CONTROL_DIM, CONTROL_DIM),
            qf: DMatrix::zeros(state_dim, state_dim),
            xf: DVector::zeros(state_dim),
        }
    }

    /// Diagonal cost from per-entry weights on the joint state.
    pub fn diagonal(
        q_diag: &[f64],
        r_diag: [f64; CONTROL_DIM],
        terminal_scale: f64,
        xf: &[f64],
    ) -> Result<Self, Error> {
        Error::check_len(xf.len(), q_diag.len())?;
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(q_diag));
        let qf = &q * terminal_scale;
        let r = DMatrix::from_diagonal(&DVector::from_column_slice(&r_diag));
        Self::new(q, r, qf, DVector::from_column_slice(xf))
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn qf(&self) -> &DMatrix<f64> {
        &self.qf
    }

    pub fn xf(&self) -> &DVector<f64> {
        &self.xf
    }

    pub fn state_dim(&self) -> usize {
        self.xf.len()
    }

    /// True when `Q` and `Qf` only weight the states of player `agent`.
    pub fn is_separable(&self, agent: usize) -> bool {
        let own = |k: usize| k / STATE_DIM == agent;
        [&self.q, &self.qf]
            .iter()
            .all(|m| (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| m[(i, j)] == 0.0 || (own(i) && own(j)))))
    }

    /// Entrywise convex combination `Σ wₖ·costₖ` of `(Q, R, Qf)` and `xf`.
    pub fn weighted_sum(weights: &[f64], costs: &[&QuadraticCost]) -> Result<Self, Error> {
        Error::check_len(weights.len(), costs.len())?;
        let first = costs.first().ok_or_else(|| Error::invalid("no costs to combine"))?;
        let n = first.state_dim();
        let mut out = QuadraticCost::zero(n);
        for (&w, c) in weights.iter().zip(costs) {
            Error::check_len(n, c.state_dim())?;
            out.q += &c.q * w;
            out.r += &c.r * w;
            out.qf += &c.qf * w;
            out.xf += &c.xf * w;
        }
        Ok(out)
    }
}

/// Stage cost `½(x−xf)ᵀQ(x−xf) + ½uᵢᵀRuᵢ`.
pub fn stage_cost(x: &JointState, u_i: &AgentControl, cost: &QuadraticCost) -> Result<f64, Error> {
    Error::check_len(cost.state_dim(), x.dim())?;
    let e = DVector::from_vec(x.to_flat()) - &cost.xf;
    let u = DVector::from_column_slice(&[u_i.omega, u_i.a]);
    Ok(0.5 * e.dot(&(&cost.q * &e)) + 0.5 * u.dot(&(&cost.r * &u)))
}

/// Gradient of [`stage_cost`] with respect to the joint state and to `u_i`.
pub fn stage_cost_gradient(
    x: &JointState,
    u_i: &AgentControl,
    cost: &QuadraticCost,
) -> Result<(Vec<f64>, [f64; CONTROL_DIM]), Error> {
    Error::check_len(cost.state_dim(), x.dim())?;
    let e = DVector::from_vec(x.to_flat()) - &cost.xf;
    let gx = &cost.q * e;
    let gu = &cost.r * DVector::from_column_slice(&[u_i.omega, u_i.a]);
    Ok((gx.iter().copied().collect(), [gu[0], gu[1]]))
}

fn terminal_cost(x: &JointState, cost: &QuadraticCost) -> f64 {
    let e = DVector::from_vec(x.to_flat()) - &cost.xf;
    0.5 * e.dot(&(&cost.qf * &e))
}

/// Player cost over a trajectory of `H` states and `H−1` own controls.
pub fn total_cost(traj: &StateTrajectory, pi_i: &[AgentControl], cost: &QuadraticCost) -> Result<f64, Error> {
    Error::check_len(traj.len(), pi_i.len() + 1)?;
    let last = traj.states().last().ok_or_else(|| Error::invalid("empty trajectory"))?;
    Error::check_len(cost.state_dim(), last.dim())?;
    let mut acc = 0.0;
    for (x, u) in traj.states().iter().zip(pi_i) {
        acc += stage_cost(x, u, cost)?;
    }
    Ok(acc + terminal_cost(last, cost))
}

/// Sparse view of a cost used inside the solver's hot loop.
#[derive(Debug, Clone)]
pub(crate) struct CostKernel {
    q: Vec<(usize, usize, f64)>,
    qf: Vec<(usize, usize, f64)>,
    r: [[f64; CONTROL_DIM]; CONTROL_DIM],
    xf: Vec<f64>,
}

fn nonzeros(m: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

impl CostKernel {
    pub(crate) fn new(cost: &QuadraticCost) -> Self {
        let r = &cost.r;
        Self {
            q: nonzeros(&cost.q),
            qf: nonzeros(&cost.qf),
            r: [[r[(0, 0)], r[(0, 1)]], [r[(1, 0)], r[(1, 1)]]],
            xf: cost.xf.iter().copied().collect(),
        }
    }

    /// `acc += M(x − xf)` with `M = Qf` when `terminal`, else `Q`.
    #[inline]
    pub(crate) fn add_state_gradient<T: Real>(&self, x: &[T], terminal: bool, acc: &mut [T]) {
        let entries = if terminal { &self.qf } else { &self.q };
        for &(i, j, v) in entries {
            acc[i] += (x[j] - self.xf[j]) * v;
        }
    }

    /// `½(x − xf)ᵀM(x − xf)`
    pub(crate) fn state_cost(&self, x: &[f64], terminal: bool) -> f64 {
        let entries = if terminal { &self.qf } else { &self.q };
        0.5 * entries.iter().map(|&(i, j, v)| (x[i] - self.xf[i]) * v * (x[j] - self.xf[j])).sum::<f64>()
    }

    /// `½uᵀRu`
    pub(crate) fn control_cost(&self, u: &[f64]) -> f64 {
        let g = self.control_gradient(u);
        0.5 * (u[0] * g[0] + u[1] * g[1])
    }

    /// `Ru`
    #[inline]
    pub(crate) fn control_gradient<T: Real>(&self, u: &[T]) -> [T; CONTROL_DIM] {
        [u[0] * self.r[0][0] + u[1] * self.r[0][1], u[0] * self.r[1][0] + u[1] * self.r[1][1]]
    }
}
