//! N-player constrained dynamic games and their open-loop Nash equilibria.

mod constraints;
mod cost;
mod residual;
mod solver;

use alloc::vec::Vec;

pub use constraints::{constraint_jacobian, evaluate_constraints, Boundary, ConstraintSet, Side};
pub(crate) use cost::CostKernel;
pub use cost::{stage_cost, stage_cost_gradient, total_cost, QuadraticCost};
pub use residual::{nash_residual, residual_breakdown, ResidualBreakdown};
pub use solver::{solve_open_loop_nash, NashSolver, SolverSettings};

use crate::dynamics::{rollout, AgentControl, JointState, Policy, StateTrajectory, STATE_DIM};
use crate::error::Error;

/// One version of the game: shared dynamics, horizon and constraints plus a
/// cost per player.
#[derive(Debug, Clone, PartialEq)]
pub struct GameDefinition {
    horizon: usize,
    dt: f64,
    costs: Vec<QuadraticCost>,
    constraints: ConstraintSet,
}

impl GameDefinition {
    pub fn new(horizon: usize, dt: f64, costs: Vec<QuadraticCost>, constraints: ConstraintSet) -> Result<Self, Error> {
        if horizon < 2 {
            return Err(Error::invalid("horizon must be at least 2"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        if costs.is_empty() {
            return Err(Error::invalid("a game needs at least one player"));
        }
        let n = costs.len() * STATE_DIM;
        for c in &costs {
            Error::check_len(n, c.state_dim())?;
        }
        Ok(Self { horizon, dt, costs, constraints })
    }

    pub fn n_agents(&self) -> usize {
        self.costs.len()
    }

    /// Number of states `H` in a planned trajectory (including `x0`).
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of control steps, `H − 1`.
    pub fn steps(&self) -> usize {
        self.horizon - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state_dim(&self) -> usize {
        self.costs.len() * STATE_DIM
    }

    pub fn costs(&self) -> &[QuadraticCost] {
        &self.costs
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    /// Same game with player `agent`'s cost replaced.
    pub fn with_cost(&self, agent: usize, cost: QuadraticCost) -> Self {
        let mut g = self.clone();
        g.costs[agent] = cost;
        g
    }

    /// Number of inequality rows over the planned states `x_1 … x_{H−1}`.
    pub fn n_inequalities(&self) -> usize {
        self.steps() * self.constraints.per_step(self.n_agents())
    }
}

/// Open-loop Nash trajectory with multipliers and solve diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NashSolution {
    /// `rollout(x0, policy)`, `H` states.
    pub trajectory: StateTrajectory,
    pub policy: Policy,
    /// Per player, the dynamics multipliers `ν_t` for `t = 1 … H−1`, flat
    /// `(t − 1)·n + k`. The Lagrangian convention is
    /// `J + Σ ν_tᵀ(x_t − f(x_{t−1}, u_{t−1})) + Σ μ c`.
    pub eq_multipliers: Vec<Vec<f64>>,
    /// Inequality multipliers in canonical order over `x_1 … x_{H−1}`.
    pub ineq_multipliers: Vec<f64>,
    /// Penalty weight of the last augmented-Lagrangian level.
    pub penalty: f64,
    pub residual_norm: f64,
    /// Newton iterations summed over all penalty levels.
    pub iterations: usize,
    /// Seconds; zero when built without the `std` feature.
    pub wall_time: f64,
}

impl NashSolution {
    /// Shifts the plan forward by `steps`, padding with zero controls and
    /// zero multipliers, for warm-starting the next receding-horizon solve
    /// from `x0`.
    pub fn shifted(&self, steps: usize, x0: &JointState, dt: f64) -> Result<NashSolution, Error> {
        let h = self.policy.steps();
        let per_agent = self
            .policy
            .per_agent
            .iter()
            .map(|seq| (0..h).map(|t| seq.get(t + steps).copied().unwrap_or_default()).collect::<Vec<AgentControl>>())
            .collect();
        let policy = Policy { per_agent };
        let trajectory = rollout(x0, &policy, dt)?;
        let shift_flat = |v: &Vec<f64>, width: usize| -> Vec<f64> {
            let mut out = alloc::vec![0.0; v.len()];
            let skip = (steps * width).min(v.len());
            out[..v.len() - skip].copy_from_slice(&v[skip..]);
            out
        };
        let n = x0.dim();
        let per_step = self.ineq_multipliers.len().checked_div(h).unwrap_or(0);
        Ok(NashSolution {
            trajectory,
            policy,
            eq_multipliers: self.eq_multipliers.iter().map(|v| shift_flat(v, n)).collect(),
            ineq_multipliers: shift_flat(&self.ineq_multipliers, per_step),
            penalty: self.penalty,
            residual_norm: f64::INFINITY,
            iterations: 0,
            wall_time: 0.0,
        })
    }
}
