//! Full-space KKT residual of a candidate open-loop Nash solution.
//!
//! This works on the stacked `(X, π, ν, μ)` representation with dense
//! Jacobians from [`linearize`] and [`constraint_jacobian`], independently of
//! the reduced adjoint sweeps the solver iterates on.

use nalgebra::DVector;

use super::{constraint_jacobian, evaluate_constraints, GameDefinition, NashSolution};
use crate::dynamics::{linearize, step_joint, JointState, StateTrajectory, CONTROL_DIM, STATE_DIM};

/// Infinity norms of the four KKT blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualBreakdown {
    /// Every player's Lagrangian gradient over its own variables `(X, πᵢ)`.
    pub stationarity: f64,
    /// Defect `x_{t+1} − f(x_t, u_t)`, including `x_0` against the initial state.
    pub dynamics: f64,
    /// Largest positive constraint value.
    pub feasibility: f64,
    /// `max |min(μ, −c)|`, also catching negative multipliers.
    pub complementarity: f64,
}

impl ResidualBreakdown {
    pub fn norm(&self) -> f64 {
        self.stationarity.max(self.dynamics).max(self.feasibility).max(self.complementarity)
    }
}

fn dims_match(game: &GameDefinition, x0: &JointState, sol: &NashSolution) -> bool {
    let (h, n, na) = (game.horizon(), game.state_dim(), game.n_agents());
    x0.n_agents() == na
        && sol.trajectory.len() == h
        && sol.trajectory.states().iter().all(|x| x.n_agents() == na)
        && sol.policy.n_agents() == na
        && sol.policy.steps() == h - 1
        && sol.eq_multipliers.len() == na
        && sol.eq_multipliers.iter().all(|v| v.len() == (h - 1) * n)
        && sol.ineq_multipliers.len() == game.n_inequalities()
}

pub fn residual_breakdown(game: &GameDefinition, x0: &JointState, sol: &NashSolution) -> ResidualBreakdown {
    let inf = f64::INFINITY;
    if !dims_match(game, x0, sol) {
        return ResidualBreakdown { stationarity: inf, dynamics: inf, feasibility: inf, complementarity: inf };
    }
    let (steps, n, dt) = (game.steps(), game.state_dim(), game.dt());
    let xs = sol.trajectory.states();

    let mut dynamics: f64 = xs[0].to_flat().iter().zip(x0.to_flat()).fold(0.0, |m, (a, b)| m.max((a - b).abs()));
    for t in 0..steps {
        match step_joint(&xs[t], &sol.policy.joint(t), dt) {
            Ok(next) => {
                for (a, b) in next.to_flat().iter().zip(xs[t + 1].to_flat()) {
                    dynamics = dynamics.max((a - b).abs());
                }
            }
            Err(_) => dynamics = inf,
        }
    }

    let planned = StateTrajectory(xs[1..].to_vec());
    let c = evaluate_constraints(&planned, game.constraints());
    let mu = &sol.ineq_multipliers;
    let feasibility = c.iter().fold(0.0_f64, |m, &v| m.max(v));
    let complementarity = mu.iter().zip(&c).fold(0.0_f64, |m, (&l, &ci)| m.max(l.min(-ci).abs()).max(-l));

    // Shared multiplier term Σ μ ∇c over the stacked planned states.
    let cjac = constraint_jacobian(&planned, game.constraints());
    let shared = cjac.transpose() * DVector::from_column_slice(mu);

    let lin: Result<alloc::vec::Vec<_>, _> = (0..steps).map(|t| linearize(&xs[t], &sol.policy.joint(t), dt)).collect();
    let Ok(lin) = lin else {
        return ResidualBreakdown { stationarity: inf, dynamics, feasibility, complementarity };
    };

    let mut stationarity: f64 = 0.0;
    for (i, cost) in game.costs().iter().enumerate() {
        let nu = &sol.eq_multipliers[i];
        let nu_at = |t: usize| DVector::from_column_slice(&nu[(t - 1) * n..t * n]);
        for t in 1..=steps {
            let e = DVector::from_vec(xs[t].to_flat()) - cost.xf();
            let mut g = if t == steps { cost.qf() * e } else { cost.q() * e };
            g += shared.rows((t - 1) * n, n);
            g += nu_at(t);
            if t < steps {
                g -= lin[t].0.transpose() * nu_at(t + 1);
            }
            stationarity = stationarity.max(g.amax());
        }
        for (t, (_, b)) in lin.iter().enumerate().take(steps) {
            let u = sol.policy.per_agent[i][t];
            let ru = cost.r() * DVector::from_column_slice(&[u.omega, u.a]);
            let b_i = b.columns(i * CONTROL_DIM, CONTROL_DIM);
            let g = ru - b_i.transpose() * nu_at(t + 1);
            stationarity = stationarity.max(g.amax());
        }
    }
    debug_assert_eq!(n % STATE_DIM, 0);
    ResidualBreakdown { stationarity, dynamics, feasibility, complementarity }
}

/// Stacked stationarity, dynamics, feasibility and complementarity residual
/// (infinity norm). Mismatched dimensions give `+∞`.
pub fn nash_residual(game: &GameDefinition, x0: &JointState, sol: &NashSolution) -> f64 {
    residual_breakdown(game, x0, sol).norm()
}
