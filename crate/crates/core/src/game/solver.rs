//! Augmented-Lagrangian Newton solver for open-loop generalized Nash
//! equilibria.
//!
//! States are eliminated by forward simulation, so every iterate satisfies
//! the dynamics exactly and each player's decision vector is its own control
//! sequence. Player `i`'s first-order condition is the gradient of
//!
//! ```text
//! Lᵢ(π) = Jᵢ(X(π), πᵢ) + Σ_c ψ(c(X(π)); μ_c, ρ),   ψ = (max(0, μ + ρc)² − μ²) / 2ρ
//! ```
//!
//! with respect to `πᵢ`, evaluated by one adjoint sweep per player. The
//! penalty term, and therefore the multipliers `μ`, are shared by all
//! players. All players' conditions are stacked into one square root-finding
//! problem solved by Newton's method with a backtracking line search on the
//! residual norm. The Jacobian is exact: each column is one forward-mode
//! (dual number) sweep through the same code.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::constraints::visit_step;
use super::{nash_residual, residual_breakdown, CostKernel, GameDefinition, NashSolution};
use crate::dynamics::{
    add_state_jacobian_transpose, rollout, step_joint_raw, JointState, Policy, CONTROL_DIM, STATE_DIM,
};
use crate::error::{Error, SolveError};
use crate::scalar::{Dual, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub tol_stationarity: f64,
    pub tol_feasibility: f64,
    pub tol_complementarity: f64,
    /// Newton iterations allowed per penalty level.
    pub max_newton_iters: usize,
    pub max_penalty_levels: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    pub regularization_init: f64,
    pub regularization_max: f64,
    pub max_backtracks: usize,
    /// Largest change of any control entry in one Newton step.
    pub max_step: f64,
    /// Multiplies the penalty weight of road-edge rows.
    pub boundary_penalty_scale: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_stationarity: 1e-6,
            tol_feasibility: 1e-6,
            tol_complementarity: 1e-6,
            max_newton_iters: 100,
            max_penalty_levels: 7,
            penalty_init: 1.0,
            penalty_growth: 10.0,
            penalty_max: 1e7,
            regularization_init: 1e-8,
            regularization_max: 1e-3,
            max_backtracks: 30,
            max_step: 1.0,
            boundary_penalty_scale: 100.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct NashSolver {
    pub settings: SolverSettings,
}

/// Solves `game` from `x0` with default settings.
pub fn solve_open_loop_nash(
    game: &GameDefinition,
    x0: &JointState,
    warm: Option<&NashSolution>,
) -> Result<NashSolution, SolveError> {
    NashSolver::default().solve(game, x0, warm)
}

struct Workspace<T> {
    states: Vec<T>,
    gpen: Vec<T>,
    lam: Vec<T>,
    lam_prev: Vec<T>,
    u: Vec<T>,
    vars: Vec<T>,
    grad: Vec<T>,
}

impl<T: Real> Workspace<T> {
    fn new(p: &Problem<'_>) -> Self {
        let z = T::zero();
        Self {
            states: vec![z; (p.steps + 1) * p.n],
            gpen: vec![z; (p.steps + 1) * p.n],
            lam: vec![z; p.n],
            lam_prev: vec![z; p.n],
            u: vec![z; p.n_agents * CONTROL_DIM],
            vars: vec![z; p.nvar],
            grad: vec![z; p.nvar],
        }
    }
}

pub(crate) struct Problem<'a> {
    game: &'a GameDefinition,
    kernels: Vec<CostKernel>,
    x0: Vec<f64>,
    n_agents: usize,
    n: usize,
    steps: usize,
    nvar: usize,
    /// Every cost weights only its own player's states, so the penalized
    /// game is a potential game and `F = ∇Φ`.
    potential: bool,
    /// Penalty multiplier per row of one time step.
    row_scale: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(game: &'a GameDefinition, x0: &JointState, boundary_scale: f64) -> Self {
        let steps = game.steps();
        let n_agents = game.n_agents();
        let pairs = n_agents * n_agents.saturating_sub(1) / 2;
        let per_step = game.constraints().per_step(n_agents);
        let row_scale = (0..per_step).map(|r| if r < pairs { 1.0 } else { boundary_scale }).collect();
        Self {
            row_scale,
            game,
            kernels: game.costs().iter().map(CostKernel::new).collect(),
            x0: x0.to_flat(),
            n_agents,
            n: n_agents * STATE_DIM,
            steps,
            nvar: n_agents * CONTROL_DIM * steps,
            potential: game.costs().iter().enumerate().all(|(i, c)| c.is_separable(i)),
        }
    }

    /// `Φ(π) = Σᵢ Jᵢ + Σ_c ψ(c; μ_c, ρ)`.
    fn potential(&self, vars: &[f64], mu: &[f64], rho: f64, ws: &mut Workspace<f64>) -> f64 {
        let (n, steps) = (self.n, self.steps);
        ws.vars.copy_from_slice(vars);
        let v = core::mem::take(&mut ws.vars);
        self.simulate(&v, ws);
        ws.vars = v;
        let mut phi = 0.0;
        for (i, kern) in self.kernels.iter().enumerate() {
            for t in 0..steps {
                phi += kern.state_cost(&ws.states[t * n..(t + 1) * n], false);
                let vi = self.var(i, t);
                phi += kern.control_cost(&vars[vi..vi + CONTROL_DIM]);
            }
            phi += kern.state_cost(&ws.states[steps * n..], true);
        }
        let mut ci = 0;
        for t in 1..=steps {
            visit_step(&ws.states[t * n..(t + 1) * n], self.game.constraints(), |row| {
                let (m, r) = (mu[ci], self.rho_at(ci, rho));
                let w = (m + r * row.value).max(0.0);
                phi += (w * w - m * m) / (2.0 * r);
                ci += 1;
            });
        }
        phi
    }

    /// Penalty weight of inequality row `ci`.
    #[inline]
    fn rho_at(&self, ci: usize, rho: f64) -> f64 {
        rho * self.row_scale[ci % self.row_scale.len()]
    }

    #[inline]
    fn var(&self, agent: usize, t: usize) -> usize {
        (agent * self.steps + t) * CONTROL_DIM
    }

    /// Forward simulation into `ws.states`.
    fn simulate<T: Real>(&self, vars: &[T], ws: &mut Workspace<T>) {
        let n = self.n;
        for (s, &x) in ws.states[..n].iter_mut().zip(&self.x0) {
            *s = T::cst(x);
        }
        for t in 0..self.steps {
            for a in 0..self.n_agents {
                let vi = self.var(a, t);
                ws.u[a * CONTROL_DIM] = vars[vi];
                ws.u[a * CONTROL_DIM + 1] = vars[vi + 1];
            }
            let (cur, next) = ws.states.split_at_mut((t + 1) * n);
            step_joint_raw(&cur[t * n..], &ws.u, self.game.dt(), &mut next[..n]);
        }
    }

    /// Stacked player gradients of the augmented Lagrangian into `ws.grad`.
    /// When `nu` is given, the dynamics multipliers are written to it.
    fn evaluate<T: Real>(&self, mu: &[f64], rho: f64, ws: &mut Workspace<T>, mut nu: Option<&mut [Vec<f64>]>) {
        let (n, steps, dt) = (self.n, self.steps, self.game.dt());
        let Workspace { states, gpen, lam, lam_prev, vars, grad, .. } = ws;
        gpen.iter_mut().for_each(|g| *g = T::zero());
        let cs = self.game.constraints();
        let mut ci = 0;
        for t in 1..=steps {
            let x = &states[t * n..(t + 1) * n];
            let g = &mut gpen[t * n..(t + 1) * n];
            visit_step(x, cs, |row| {
                let w = row.value * self.rho_at(ci, rho) + mu[ci];
                if w.re() > 0.0 {
                    let (a, ga) = row.first;
                    g[a * STATE_DIM] += w * ga[0];
                    g[a * STATE_DIM + 1] += w * ga[1];
                    if let Some((b, gb)) = row.second {
                        g[b * STATE_DIM] += w * gb[0];
                        g[b * STATE_DIM + 1] += w * gb[1];
                    }
                }
                ci += 1;
            });
        }

        for (i, kern) in self.kernels.iter().enumerate() {
            lam.iter_mut().zip(&gpen[steps * n..]).for_each(|(l, &g)| *l = g);
            kern.add_state_gradient(&states[steps * n..], true, lam);
            for t in (1..=steps).rev() {
                let vi = self.var(i, t - 1);
                let rg = kern.control_gradient(&vars[vi..vi + CONTROL_DIM]);
                grad[vi] = rg[0] + lam[i * STATE_DIM + 2] * dt;
                grad[vi + 1] = rg[1] + lam[i * STATE_DIM + 3] * dt;
                if let Some(nu) = nu.as_deref_mut() {
                    for (k, l) in lam.iter().enumerate() {
                        nu[i][(t - 1) * n + k] = -l.re();
                    }
                }
                if t > 1 {
                    let xp = &states[(t - 1) * n..t * n];
                    lam_prev.iter_mut().zip(&gpen[(t - 1) * n..t * n]).for_each(|(l, &g)| *l = g);
                    kern.add_state_gradient(xp, false, lam_prev);
                    add_state_jacobian_transpose(xp, lam, dt, lam_prev);
                    core::mem::swap(lam, lam_prev);
                }
            }
        }
    }

    fn residual(&self, vars: &[f64], mu: &[f64], rho: f64, ws: &mut Workspace<f64>) -> Vec<f64> {
        ws.vars.copy_from_slice(vars);
        let v = core::mem::take(&mut ws.vars);
        self.simulate(&v, ws);
        ws.vars = v;
        self.evaluate(mu, rho, ws, None);
        ws.grad.clone()
    }

    fn jacobian(&self, vars: &[f64], mu: &[f64], rho: f64, ws: &mut Workspace<Dual>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.nvar, self.nvar);
        for (d, &v) in ws.vars.iter_mut().zip(vars) {
            *d = Dual::cst(v);
        }
        for col in 0..self.nvar {
            ws.vars[col].du = 1.0;
            let v = core::mem::take(&mut ws.vars);
            self.simulate(&v, ws);
            ws.vars = v;
            self.evaluate(mu, rho, ws, None);
            ws.vars[col].du = 0.0;
            for (r, g) in ws.grad.iter().enumerate() {
                jac[(r, col)] = g.du;
            }
        }
        jac
    }

    fn constraint_values(&self, vars: &[f64], ws: &mut Workspace<f64>) -> Vec<f64> {
        ws.vars.copy_from_slice(vars);
        let v = core::mem::take(&mut ws.vars);
        self.simulate(&v, ws);
        ws.vars = v;
        let mut out = Vec::with_capacity(self.game.n_inequalities());
        for t in 1..=self.steps {
            visit_step(&ws.states[t * self.n..(t + 1) * self.n], self.game.constraints(), |row| out.push(row.value));
        }
        out
    }

    fn dynamics_multipliers(&self, vars: &[f64], mu: &[f64], ws: &mut Workspace<f64>) -> Vec<Vec<f64>> {
        let mut nu = vec![vec![0.0; self.steps * self.n]; self.n_agents];
        ws.vars.copy_from_slice(vars);
        let v = core::mem::take(&mut ws.vars);
        self.simulate(&v, ws);
        ws.vars = v;
        self.evaluate(mu, 0.0, ws, Some(&mut nu));
        nu
    }
}

fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(feature = "std")]
struct Stopwatch(std::time::Instant);
#[cfg(feature = "std")]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
#[cfg(not(feature = "std"))]
struct Stopwatch;
#[cfg(not(feature = "std"))]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch
    }
    fn seconds(&self) -> f64 {
        0.0
    }
}

struct InnerOutcome {
    converged: bool,
}

impl NashSolver {
    pub fn new(settings: SolverSettings) -> Self {
        Self { settings }
    }

    pub fn solve(
        &self,
        game: &GameDefinition,
        x0: &JointState,
        warm: Option<&NashSolution>,
    ) -> Result<NashSolution, SolveError> {
        let clock = Stopwatch::start();
        Error::check_len(game.n_agents(), x0.n_agents())?;
        if !x0.is_finite() {
            return Err(Error::invalid("non-finite initial state").into());
        }
        let s = &self.settings;
        let prob = Problem::new(game, x0, s.boundary_penalty_scale);
        let mut ws = Workspace::<f64>::new(&prob);
        let mut wsd = Workspace::<Dual>::new(&prob);
        let n_ineq = game.n_inequalities();

        let warm = warm.filter(|w| w.policy.n_agents() == game.n_agents() && w.policy.steps() == game.steps());
        let mut vars = match warm {
            Some(w) => w.policy.to_flat(),
            None => vec![0.0; prob.nvar],
        };
        let mut mu = match warm {
            Some(w) if w.ineq_multipliers.len() == n_ineq => w.ineq_multipliers.iter().map(|m| m.max(0.0)).collect(),
            _ => vec![0.0; n_ineq],
        };
        if !vars.iter().all(|v| v.is_finite()) {
            vars.iter_mut().for_each(|v| *v = 0.0);
        }

        let mut rho = s.penalty_init;
        let mut iterations = 0;
        let mut best: Option<NashSolution> = None;
        for _level in 0..s.max_penalty_levels {
            let inner = self.newton(&prob, &mut vars, &mu, rho, &mut ws, &mut wsd, &mut iterations)?;
            let c = prob.constraint_values(&vars, &mut ws);
            for (k, (m, ci)) in mu.iter_mut().zip(&c).enumerate() {
                *m = (*m + prob.rho_at(k, rho) * ci).max(0.0);
            }
            let policy = Policy::from_flat(game.n_agents(), game.steps(), &vars);
            let trajectory = rollout(x0, &policy, game.dt())?;
            let eq_multipliers = prob.dynamics_multipliers(&vars, &mu, &mut ws);
            let mut sol = NashSolution {
                trajectory,
                policy,
                eq_multipliers,
                ineq_multipliers: mu.clone(),
                penalty: rho,
                residual_norm: 0.0,
                iterations,
                wall_time: 0.0,
            };
            sol.residual_norm = nash_residual(game, x0, &sol);
            let breakdown = residual_breakdown(game, x0, &sol);
            let done = inner.converged
                && breakdown.stationarity <= s.tol_stationarity
                && breakdown.dynamics <= s.tol_feasibility
                && breakdown.feasibility <= s.tol_feasibility
                && breakdown.complementarity <= s.tol_complementarity;
            if done {
                sol.wall_time = clock.seconds();
                return Ok(sol);
            }
            if best.as_ref().is_none_or(|b| sol.residual_norm < b.residual_norm) {
                best = Some(sol);
            }
            rho = (rho * s.penalty_growth).min(s.penalty_max);
        }
        let mut best = best.expect("at least one penalty level");
        best.iterations = iterations;
        best.wall_time = clock.seconds();
        Err(SolveError::MaxIterationsExceeded { best: alloc::boxed::Box::new(best) })
    }

    #[allow(clippy::too_many_arguments)]
    fn newton(
        &self,
        prob: &Problem<'_>,
        vars: &mut Vec<f64>,
        mu: &[f64],
        rho: f64,
        ws: &mut Workspace<f64>,
        wsd: &mut Workspace<Dual>,
        iterations: &mut usize,
    ) -> Result<InnerOutcome, SolveError> {
        if prob.potential {
            return self.newton_potential(prob, vars, mu, rho, ws, wsd, iterations);
        }
        let s = &self.settings;
        let mut f = prob.residual(vars, mu, rho, ws);
        if !f.iter().all(|v| v.is_finite()) {
            return Err(SolveError::NonFiniteIterate);
        }
        let mut fnorm = norm2(&f);
        for _ in 0..s.max_newton_iters {
            if norm_inf(&f) <= s.tol_stationarity {
                return Ok(InnerOutcome { converged: true });
            }
            *iterations += 1;
            let jac = prob.jacobian(vars, mu, rho, wsd);
            let step = self.regularized_step(&jac, &f)?;

            let mut accepted = None;
            let step_max = step.amax();
            let mut alpha = if step_max > s.max_step { s.max_step / step_max } else { 1.0 };
            for _ in 0..s.max_backtracks {
                let trial: Vec<f64> = vars.iter().zip(step.iter()).map(|(v, d)| v + alpha * d).collect();
                let ft = prob.residual(&trial, mu, rho, ws);
                let ftnorm = norm2(&ft);
                if ftnorm.is_finite() && ftnorm <= (1.0 - 1e-4 * alpha) * fnorm {
                    accepted = Some((trial, ft, ftnorm));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_none() {
                accepted = self.merit_step(prob, &jac, vars, &f, fnorm, mu, rho, ws);
            }
            match accepted {
                Some((trial, ft, ftnorm)) => {
                    *vars = trial;
                    f = ft;
                    fnorm = ftnorm;
                }
                None => return Ok(InnerOutcome { converged: false }),
            }
        }
        Ok(InnerOutcome { converged: norm_inf(&f) <= s.tol_stationarity })
    }

    /// Newton's method on the potential `Φ` with the Hessian shifted by
    /// `σI` until it is positive definite, and an Armijo line search on `Φ`.
    #[allow(clippy::too_many_arguments)]
    fn newton_potential(
        &self,
        prob: &Problem<'_>,
        vars: &mut Vec<f64>,
        mu: &[f64],
        rho: f64,
        ws: &mut Workspace<f64>,
        wsd: &mut Workspace<Dual>,
        iterations: &mut usize,
    ) -> Result<InnerOutcome, SolveError> {
        let s = &self.settings;
        let mut f = prob.residual(vars, mu, rho, ws);
        let mut phi = prob.potential(vars, mu, rho, ws);
        if !(phi.is_finite() && f.iter().all(|v| v.is_finite())) {
            return Err(SolveError::NonFiniteIterate);
        }
        let mut sigma = 0.0;
        for _ in 0..s.max_newton_iters {
            if norm_inf(&f) <= s.tol_stationarity {
                return Ok(InnerOutcome { converged: true });
            }
            *iterations += 1;
            let jac = prob.jacobian(vars, mu, rho, wsd);
            let hess = (&jac + jac.transpose()) * 0.5;
            let step = self.convexified_step(&hess, &f, &mut sigma)?;
            let slope: f64 = step.iter().zip(&f).map(|(d, g)| d * g).sum();

            let step_max = step.amax();
            let mut alpha = if step_max > s.max_step { s.max_step / step_max } else { 1.0 };
            let mut accepted = None;
            for _ in 0..s.max_backtracks {
                let trial: Vec<f64> = vars.iter().zip(step.iter()).map(|(v, d)| v + alpha * d).collect();
                let pt = prob.potential(&trial, mu, rho, ws);
                if pt.is_finite() && pt <= phi + 1e-4 * alpha * slope {
                    accepted = Some((trial, pt));
                    break;
                }
                alpha *= 0.5;
            }
            let (trial, pt) = match accepted {
                Some(a) => a,
                None => {
                    // At roundoff level in Φ, fall back to a full step that
                    // reduces the residual.
                    let trial: Vec<f64> = vars.iter().zip(step.iter()).map(|(v, d)| v + d).collect();
                    let ft = prob.residual(&trial, mu, rho, ws);
                    if norm2(&ft) < norm2(&f) {
                        let pt = prob.potential(&trial, mu, rho, ws);
                        (trial, pt)
                    } else {
                        return Ok(InnerOutcome { converged: false });
                    }
                }
            };
            *vars = trial;
            phi = pt;
            f = prob.residual(vars, mu, rho, ws);
        }
        Ok(InnerOutcome { converged: norm_inf(&f) <= s.tol_stationarity })
    }

    /// Solves `(H + σI) d = −F` with the smallest `σ` from a geometric
    /// ladder for which the Cholesky factorization succeeds. `sigma` carries
    /// the last shift between iterations.
    fn convexified_step(&self, hess: &DMatrix<f64>, f: &[f64], sigma: &mut f64) -> Result<DVector<f64>, SolveError> {
        let rhs = -DVector::from_column_slice(f);
        let floor = self.settings.regularization_init * hess.amax().max(1.0);
        let mut shift = if *sigma > 0.0 { (*sigma * 0.1).max(floor) } else { 0.0 };
        for _ in 0..60 {
            let mut m = hess.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += shift;
            }
            if let Some(chol) = m.cholesky() {
                let d = chol.solve(&rhs);
                if d.iter().all(|v| v.is_finite()) {
                    *sigma = shift;
                    return Ok(d);
                }
            }
            shift = if shift == 0.0 { floor } else { shift * 10.0 };
        }
        Err(SolveError::SingularKktSystem { regularization: shift })
    }

    /// Levenberg–Marquardt steps on `½‖F‖²` with growing damping, used when
    /// the Newton direction fails to decrease the residual (typically across
    /// a switch of the active constraint set).
    #[allow(clippy::too_many_arguments)]
    fn merit_step(
        &self,
        prob: &Problem<'_>,
        jac: &DMatrix<f64>,
        vars: &[f64],
        f: &[f64],
        fnorm: f64,
        mu: &[f64],
        rho: f64,
        ws: &mut Workspace<f64>,
    ) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let jt = jac.transpose();
        let jtj = &jt * jac;
        let g = &jt * DVector::from_column_slice(f);
        let mut lambda = 1e-6 * jtj.diagonal().amax().max(1e-12);
        for _ in 0..16 {
            let mut m = jtj.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += lambda;
            }
            if let Some(chol) = m.cholesky() {
                let d = chol.solve(&(-&g));
                let trial: Vec<f64> = vars.iter().zip(d.iter()).map(|(v, d)| v + d).collect();
                let ft = prob.residual(&trial, mu, rho, ws);
                let ftnorm = norm2(&ft);
                if ftnorm.is_finite() && ftnorm < fnorm * (1.0 - 1e-8) {
                    return Some((trial, ft, ftnorm));
                }
            }
            lambda *= 10.0;
        }
        None
    }

    /// Solves `(J + λI) d = −F`, raising `λ` by 10× while the system is
    /// numerically singular.
    fn regularized_step(&self, jac: &DMatrix<f64>, f: &[f64]) -> Result<DVector<f64>, SolveError> {
        let s = &self.settings;
        let rhs = -DVector::from_column_slice(f);
        let scale = jac.amax().max(1.0);
        let mut reg = s.regularization_init;
        loop {
            let mut m = jac.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += reg;
            }
            let lu = m.lu();
            let u_diag = lu.u().diagonal();
            let min_pivot = u_diag.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
            if min_pivot > 1e-13 * scale {
                if let Some(d) = lu.solve(&rhs) {
                    if d.iter().all(|v| v.is_finite()) {
                        return Ok(d);
                    }
                }
            }
            if reg >= s.regularization_max {
                return Err(SolveError::SingularKktSystem { regularization: reg });
            }
            reg = (reg * 10.0).min(s.regularization_max);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AgentState;
    use crate::game::{Boundary, ConstraintSet, QuadraticCost, Side};

    fn lane_cost(n_agents: usize, me: usize, y: f64, v: f64) -> QuadraticCost {
        let mut q = vec![0.0; 4 * n_agents];
        let mut xf = vec![0.0; 4 * n_agents];
        q[4 * me + 1] = 1.0;
        q[4 * me + 2] = 0.1;
        q[4 * me + 3] = 1.0;
        xf[4 * me + 1] = y;
        xf[4 * me + 3] = v;
        QuadraticCost::diagonal(&q, [0.1, 0.1], 10.0, &xf).unwrap()
    }

    fn highway() -> (GameDefinition, JointState) {
        let lo = Boundary::segment([-100.0, 0.0], [500.0, 0.0], Side::Left).unwrap();
        let hi = Boundary::segment([-100.0, 7.4], [500.0, 7.4], Side::Right).unwrap();
        let cs = ConstraintSet::new(2.8, vec![lo, hi]).unwrap().with_boundary_clearance(1.0).unwrap();
        let g = GameDefinition::new(20, 0.1, vec![lane_cost(2, 0, 5.55, 8.0), lane_cost(2, 1, 1.85, 4.0)], cs).unwrap();
        let x0 = JointState(vec![AgentState::new(0.0, 5.55, 0.0, 8.0), AgentState::new(8.0, 5.55, 0.0, 4.0)]);
        (g, x0)
    }

    #[test]
    fn dual_jacobian_matches_finite_differences_of_residual() {
        let (g, x0) = highway();
        let p = Problem::new(&g, &x0, 100.0);
        let mut ws = Workspace::<f64>::new(&p);
        let mut wsd = Workspace::<Dual>::new(&p);
        let vars: Vec<f64> = (0..p.nvar).map(|k| 0.3 * libm::sin(k as f64)).collect();
        let mu: Vec<f64> = (0..g.n_inequalities()).map(|k| if k % 3 == 0 { 0.5 } else { 0.0 }).collect();
        let rho = 10.0;
        let jac = p.jacobian(&vars, &mu, rho, &mut wsd);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for col in 0..p.nvar {
            let mut a = vars.clone();
            let mut b = vars.clone();
            a[col] += h;
            b[col] -= h;
            let fa = p.residual(&a, &mu, rho, &mut ws);
            let fb = p.residual(&b, &mu, rho, &mut ws);
            for r in 0..p.nvar {
                worst = worst.max(((fa[r] - fb[r]) / (2.0 * h) - jac[(r, col)]).abs());
            }
        }
        assert!(worst < 1e-5, "worst {worst}");
    }
}

#[cfg(test)]
mod gradient_check {
    use super::*;
    use crate::dynamics::AgentState;
    use crate::game::{total_cost, ConstraintSet, QuadraticCost};

    #[test]
    fn residual_is_cost_gradient_single_agent() {
        let c = QuadraticCost::diagonal(&[0.0, 1.0, 0.1, 1.0], [0.1, 0.1], 10.0, &[0.0, 1.85, 0.0, 4.0]).unwrap();
        let cs = ConstraintSet::new(2.8, vec![]).unwrap();
        let g = GameDefinition::new(20, 0.1, vec![c.clone()], cs).unwrap();
        let x0 = JointState(vec![AgentState::new(8.0, 5.55, 0.0, 4.0)]);
        let p = Problem::new(&g, &x0, 100.0);
        let mut ws = Workspace::<f64>::new(&p);
        let vars: Vec<f64> = (0..p.nvar).map(|k| 0.3 * libm::sin(k as f64)).collect();
        let f = p.residual(&vars, &[], 1.0, &mut ws);
        let cost = |v: &[f64]| {
            let pol = Policy::from_flat(1, 19, v);
            let tr = rollout(&x0, &pol, 0.1).unwrap();
            total_cost(&tr, &pol.per_agent[0], &c).unwrap()
        };
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..p.nvar {
            let mut a = vars.clone();
            let mut b = vars.clone();
            a[k] += h;
            b[k] -= h;
            let fd = (cost(&a) - cost(&b)) / (2.0 * h);
            worst = worst.max((fd - f[k]).abs());
        }
        assert!(worst < 1e-4, "worst {worst}");
    }
}
