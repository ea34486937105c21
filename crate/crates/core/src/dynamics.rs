//! Unicycle vehicle model, joint-system propagation and its linearization.
//!
//! Each agent carries the state `(px, py, theta, v)` and the control
//! `(omega, a)`. Time is discretized with an explicit Euler step of fixed
//! length `dt`. Agents are dynamically decoupled; they interact only through
//! the constraints of the game.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::Error;
use crate::scalar::Real;

/// Number of state entries per agent.
pub const STATE_DIM: usize = 4;
/// Number of control entries per agent.
pub const CONTROL_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentState {
    /// Position x (m).
    pub px: f64,
    /// Position y (m).
    pub py: f64,
    /// Heading (rad), never wrapped.
    pub theta: f64,
    /// Speed (m/s).
    pub v: f64,
}

impl AgentState {
    pub const fn new(px: f64, py: f64, theta: f64, v: f64) -> Self {
        Self { px, py, theta, v }
    }

    pub fn as_array(&self) -> [f64; STATE_DIM] {
        [self.px, self.py, self.theta, self.v]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }

    pub fn position(&self) -> [f64; 2] {
        [self.px, self.py]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentControl {
    /// Angular velocity (rad/s).
    pub omega: f64,
    /// Longitudinal acceleration (m/s²).
    pub a: f64,
}

impl AgentControl {
    pub const fn new(omega: f64, a: f64) -> Self {
        Self { omega, a }
    }

    pub fn is_finite(&self) -> bool {
        self.omega.is_finite() && self.a.is_finite()
    }
}

/// States of all agents at one instant, in agent order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointState(pub Vec<AgentState>);

impl JointState {
    pub fn n_agents(&self) -> usize {
        self.0.len()
    }

    /// Joint state dimension `n`.
    pub fn dim(&self) -> usize {
        self.0.len() * STATE_DIM
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|s| s.as_array()).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        JointState(flat.chunks_exact(STATE_DIM).map(AgentState::from_slice).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(AgentState::is_finite)
    }
}

/// Controls of all agents at one instant, in agent order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointControl(pub Vec<AgentControl>);

impl JointControl {
    pub fn zeros(n_agents: usize) -> Self {
        JointControl(alloc::vec![AgentControl::default(); n_agents])
    }

    pub fn n_agents(&self) -> usize {
        self.0.len()
    }
}

/// Per-agent control sequences over a planning horizon.
///
/// Flattened agent-major: agent `i`'s block holds `(omega, a)` pairs for
/// every step, so each player's decision vector is contiguous.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Policy {
    pub per_agent: Vec<Vec<AgentControl>>,
}

impl Policy {
    pub fn zeros(n_agents: usize, steps: usize) -> Self {
        Policy { per_agent: alloc::vec![alloc::vec![AgentControl::default(); steps]; n_agents] }
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    /// Number of control steps, `H - 1` for a game of horizon `H`.
    pub fn steps(&self) -> usize {
        self.per_agent.first().map_or(0, Vec::len)
    }

    pub fn joint(&self, t: usize) -> JointControl {
        JointControl(self.per_agent.iter().map(|seq| seq[t]).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.per_agent.iter().flat_map(|seq| seq.iter().flat_map(|u| [u.omega, u.a])).collect()
    }

    pub fn from_flat(n_agents: usize, steps: usize, flat: &[f64]) -> Self {
        debug_assert_eq!(flat.len(), n_agents * steps * CONTROL_DIM);
        let per_agent = flat
            .chunks_exact(steps * CONTROL_DIM)
            .map(|blk| blk.chunks_exact(CONTROL_DIM).map(|c| AgentControl::new(c[0], c[1])).collect())
            .collect();
        Policy { per_agent }
    }

    fn validate(&self) -> Result<(), Error> {
        let steps = self.steps();
        for seq in &self.per_agent {
            Error::check_len(steps, seq.len())?;
            if !seq.iter().all(AgentControl::is_finite) {
                return Err(Error::invalid("non-finite control in policy"));
            }
        }
        Ok(())
    }
}

/// A sequence of joint states; produced by [`rollout`] it starts at `x0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateTrajectory(pub Vec<JointState>);

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.0.first().map_or(0, JointState::n_agents)
    }

    pub fn states(&self) -> &[JointState] {
        &self.0
    }

    /// Sub-window `[start, end)` as an owned trajectory.
    pub fn window(&self, start: usize, end: usize) -> StateTrajectory {
        StateTrajectory(self.0[start..end].to_vec())
    }
}

fn check_dt(dt: f64) -> Result<(), Error> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("time step must be positive and finite"))
    }
}

/// Euler step of one agent on flat slices: `x = [px, py, theta, v]`,
/// `u = [omega, a]`.
#[inline]
pub(crate) fn step_agent_raw<T: Real>(x: &[T], u: &[T], dt: f64, out: &mut [T]) {
    let (px, py, th, v) = (x[0], x[1], x[2], x[3]);
    out[0] = px + v * th.cos() * dt;
    out[1] = py + v * th.sin() * dt;
    out[2] = th + u[0] * dt;
    out[3] = v + u[1] * dt;
}

/// Joint Euler step on flat slices.
#[inline]
pub(crate) fn step_joint_raw<T: Real>(x: &[T], u: &[T], dt: f64, out: &mut [T]) {
    for ((xs, us), os) in
        x.chunks_exact(STATE_DIM).zip(u.chunks_exact(CONTROL_DIM)).zip(out.chunks_exact_mut(STATE_DIM))
    {
        step_agent_raw(xs, us, dt, os);
    }
}

/// Adds `A^T lam` to `acc`, where `A` is the state Jacobian of the joint
/// step evaluated at `x`.
#[inline]
pub(crate) fn add_state_jacobian_transpose<T: Real>(x: &[T], lam: &[T], dt: f64, acc: &mut [T]) {
    for ((xs, ls), a) in x.chunks_exact(STATE_DIM).zip(lam.chunks_exact(STATE_DIM)).zip(acc.chunks_exact_mut(STATE_DIM))
    {
        let (c, s, v) = (xs[2].cos(), xs[2].sin(), xs[3]);
        a[0] += ls[0];
        a[1] += ls[1];
        a[2] += ls[2] + (v * c * ls[1] - v * s * ls[0]) * dt;
        a[3] += ls[3] + (c * ls[0] + s * ls[1]) * dt;
    }
}

pub fn step_agent(state: &AgentState, control: &AgentControl, dt: f64) -> Result<AgentState, Error> {
    check_dt(dt)?;
    if !state.is_finite() || !control.is_finite() {
        return Err(Error::invalid("non-finite state or control"));
    }
    let mut out = [0.0; STATE_DIM];
    step_agent_raw(&state.as_array(), &[control.omega, control.a], dt, &mut out);
    Ok(AgentState::from_slice(&out))
}

pub fn step_joint(x: &JointState, u: &JointControl, dt: f64) -> Result<JointState, Error> {
    Error::check_len(x.n_agents(), u.n_agents())?;
    x.0.iter().zip(&u.0).map(|(s, c)| step_agent(s, c, dt)).collect::<Result<Vec<_>, _>>().map(JointState)
}

/// Propagates `x0` under `pi`; the result has `pi.steps() + 1` entries.
pub fn rollout(x0: &JointState, pi: &Policy, dt: f64) -> Result<StateTrajectory, Error> {
    Error::check_len(x0.n_agents(), pi.n_agents())?;
    pi.validate()?;
    if pi.steps() == 0 {
        return Err(Error::invalid("policy horizon must be at least one step"));
    }
    let mut traj = Vec::with_capacity(pi.steps() + 1);
    traj.push(x0.clone());
    for t in 0..pi.steps() {
        let next = step_joint(&traj[t], &pi.joint(t), dt)?;
        traj.push(next);
    }
    Ok(StateTrajectory(traj))
}

/// Analytic Jacobians `(df/dx, df/du)` of [`step_joint`]; both block-diagonal
/// per agent.
pub fn linearize(x: &JointState, u: &JointControl, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>), Error> {
    Error::check_len(x.n_agents(), u.n_agents())?;
    check_dt(dt)?;
    let n = x.dim();
    let m = u.n_agents() * CONTROL_DIM;
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DMatrix::<f64>::zeros(n, m);
    for (k, s) in x.0.iter().enumerate() {
        let (r, c) = (k * STATE_DIM, k * CONTROL_DIM);
        let (cth, sth) = (libm::cos(s.theta), libm::sin(s.theta));
        a[(r, r + 2)] = -dt * s.v * sth;
        a[(r, r + 3)] = dt * cth;
        a[(r + 1, r + 2)] = dt * s.v * cth;
        a[(r + 1, r + 3)] = dt * sth;
        b[(r + 2, c)] = dt;
        b[(r + 3, c + 1)] = dt;
    }
    Ok((a, b))
}
