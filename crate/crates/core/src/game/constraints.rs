//! Coupled inequality constraints in `c ≤ 0` form.
//!
//! Canonical ordering, per time step (steps in trajectory order):
//! first every agent pair `(i, j)` with `i < j` in lexicographic order, then
//! every `(boundary b, agent k)` with `b` major. Multiplier vectors follow the
//! same ordering so they stay comparable across warm starts.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dynamics::{StateTrajectory, STATE_DIM};
use crate::error::Error;
use crate::scalar::Real;

/// Side of a directed polyline on which the drivable area lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A road edge as an oriented polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    points: Vec<[f64; 2]>,
    inside: Side,
}

impl Boundary {
    pub fn new(points: Vec<[f64; 2]>, inside: Side) -> Result<Self, Error> {
        if points.len() < 2 {
            return Err(Error::invalid("a boundary needs at least two points"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite boundary point"));
        }
        if points.windows(2).any(|w| libm::hypot(w[1][0] - w[0][0], w[1][1] - w[0][1]) < 1e-9) {
            return Err(Error::invalid("degenerate boundary segment"));
        }
        Ok(Self { points, inside })
    }

    /// Straight edge from `a` to `b`.
    pub fn segment(a: [f64; 2], b: [f64; 2], inside: Side) -> Result<Self, Error> {
        Self::new(alloc::vec![a, b], inside)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn inside(&self) -> Side {
        self.inside
    }

    /// Closest point on the polyline and the index of the segment holding it.
    /// Ties resolve to the lowest segment index.
    pub(crate) fn closest<T: Real>(&self, p: [T; 2]) -> ([T; 2], usize) {
        let mut best = ([T::zero(), T::zero()], 0usize);
        let mut best_d2 = f64::INFINITY;
        for (k, w) in self.points.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len2 = ex * ex + ey * ey;
            let s = ((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) * (1.0 / len2);
            let q = if s.re() <= 0.0 {
                [T::cst(a[0]), T::cst(a[1])]
            } else if s.re() >= 1.0 {
                [T::cst(b[0]), T::cst(b[1])]
            } else {
                [s * ex + a[0], s * ey + a[1]]
            };
            let (dx, dy) = (p[0].re() - q[0].re(), p[1].re() - q[1].re());
            let d2 = dx * dx + dy * dy;
            if d2 < best_d2 {
                best_d2 = d2;
                best = (q, k);
            }
        }
        best
    }

    /// Euclidean distance from `p` to the polyline.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let (q, _) = self.closest(p);
        libm::hypot(p[0] - q[0], p[1] - q[1])
    }

    /// Whether `p` lies on the drivable side of this edge (or on it).
    pub fn is_inside(&self, p: [f64; 2]) -> bool {
        let (q, k) = self.closest(p);
        self.on_inside(p, q, k)
    }

    fn on_inside(&self, p: [f64; 2], q: [f64; 2], k: usize) -> bool {
        let (a, b) = (self.points[k], self.points[k + 1]);
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let normal = match self.inside {
            Side::Left => [-ey, ex],
            Side::Right => [ey, -ex],
        };
        (p[0] - q[0]) * normal[0] + (p[1] - q[1]) * normal[1] >= 0.0
    }
}

/// Collision radius plus road edges shared by all players.
///
/// Pairs must keep their centers `radius` apart and every agent must keep
/// `boundary_clearance` from each edge. The clearance defaults to the radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    radius: f64,
    boundary_clearance: f64,
    boundaries: Vec<Boundary>,
}

impl ConstraintSet {
    pub fn new(radius: f64, boundaries: Vec<Boundary>) -> Result<Self, Error> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("collision radius must be positive"));
        }
        Ok(Self { radius, boundary_clearance: radius, boundaries })
    }

    pub fn with_boundary_clearance(mut self, clearance: f64) -> Result<Self, Error> {
        if !(clearance.is_finite() && clearance > 0.0) {
            return Err(Error::invalid("boundary clearance must be positive"));
        }
        self.boundary_clearance = clearance;
        Ok(self)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn boundary_clearance(&self) -> f64 {
        self.boundary_clearance
    }

    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundaries
    }

    /// Constraint rows per time step for `n_agents` agents.
    pub fn per_step(&self, n_agents: usize) -> usize {
        n_agents * n_agents.saturating_sub(1) / 2 + self.boundaries.len() * n_agents
    }

    /// Whether a position is on the drivable side of every edge.
    pub fn is_inside(&self, p: [f64; 2]) -> bool {
        self.boundaries.iter().all(|b| b.is_inside(p))
    }
}

/// One constraint row at a single time step: its value and the gradient with
/// respect to the positions of the (one or two) agents involved.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Row<T> {
    pub value: T,
    pub first: (usize, [T; 2]),
    pub second: Option<(usize, [T; 2])>,
}

/// Visits the rows of one joint state `x` (flat) in canonical order.
pub(crate) fn visit_step<T: Real>(x: &[T], cs: &ConstraintSet, mut f: impl FnMut(Row<T>)) {
    let n_agents = x.len() / STATE_DIM;
    let r2 = cs.radius * cs.radius;
    let c2 = cs.boundary_clearance * cs.boundary_clearance;
    let pos = |k: usize| [x[k * STATE_DIM], x[k * STATE_DIM + 1]];
    for i in 0..n_agents {
        for j in (i + 1)..n_agents {
            let (pi, pj) = (pos(i), pos(j));
            let (dx, dy) = (pi[0] - pj[0], pi[1] - pj[1]);
            f(Row {
                value: -(dx * dx + dy * dy) + r2,
                first: (i, [dx * -2.0, dy * -2.0]),
                second: Some((j, [dx * 2.0, dy * 2.0])),
            });
        }
    }
    for b in &cs.boundaries {
        for k in 0..n_agents {
            let p = pos(k);
            let (q, seg) = b.closest(p);
            let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
            let sign = if b.on_inside([p[0].re(), p[1].re()], [q[0].re(), q[1].re()], seg) { 1.0 } else { -1.0 };
            f(Row {
                value: (dx * dx + dy * dy) * -sign + c2,
                first: (k, [dx * (-2.0 * sign), dy * (-2.0 * sign)]),
                second: None,
            });
        }
    }
}

/// Constraint values over every state of `traj`, t-major in canonical order.
pub fn evaluate_constraints(traj: &StateTrajectory, cs: &ConstraintSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.len() * cs.per_step(traj.n_agents()));
    for x in traj.states() {
        visit_step(&x.to_flat(), cs, |row| out.push(row.value));
    }
    out
}

/// Jacobian of [`evaluate_constraints`] with respect to the stacked states of
/// `traj` (column `t·n + k`).
pub fn constraint_jacobian(traj: &StateTrajectory, cs: &ConstraintSet) -> DMatrix<f64> {
    let n = traj.n_agents() * STATE_DIM;
    let rows = traj.len() * cs.per_step(traj.n_agents());
    let mut jac = DMatrix::zeros(rows, traj.len() * n);
    let mut r = 0;
    for (t, x) in traj.states().iter().enumerate() {
        visit_step(&x.to_flat(), cs, |row| {
            let mut put = |(agent, g): (usize, [f64; 2])| {
                let col = t * n + agent * STATE_DIM;
                jac[(r, col)] = g[0];
                jac[(r, col + 1)] = g[1];
            };
            put(row.first);
            if let Some(second) = row.second {
                put(second);
            }
            r += 1;
        });
    }
    jac
}
