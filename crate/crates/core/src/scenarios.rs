//! Scenario descriptions and builders for the overtake, merge and
//! intersection scenes.
//!
//! A [`ScenarioConfig`] is plain data: geometry, agents with their true and
//! broadcast costs, the alternatives other agents consider for them, and the
//! planner and noise settings. Costs are given per agent as [`CostParams`] on
//! the agent's own state block and expanded to joint-state matrices on demand.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use crate::dynamics::{AgentState, JointState, StateTrajectory, STATE_DIM};
use crate::error::Error;
use crate::game::{evaluate_constraints, Boundary, ConstraintSet, GameDefinition, QuadraticCost, Side};
use crate::hypothesis::{HypothesisSet, PerceptionMode};

pub const LANE_WIDTH: f64 = 3.7;
/// Right lane center of the highway scenes.
pub const RIGHT_LANE_Y: f64 = 0.5 * LANE_WIDTH;
/// Left lane center of the highway scenes.
pub const LEFT_LANE_Y: f64 = 1.5 * LANE_WIDTH;
/// Lane center of the merge on-ramp.
pub const RAMP_LANE_Y: f64 = -0.5 * LANE_WIDTH;
pub const VEHICLE_RADIUS: f64 = 1.0;
pub const MERGE_RAMP_LENGTH: f64 = 30.0;
/// Where the merge taper starts narrowing; it closes `MERGE_RAMP_LENGTH` later.
pub const MERGE_TAPER_START_X: f64 = 20.0;
/// Width of the barrier separating the on-ramp from the right lane.
pub const MERGE_ISLAND_WIDTH: f64 = 0.3;

const BASE_LANE_WEIGHT: f64 = 1.0;
const BASE_SPEED_WEIGHT: f64 = 1.0;
const BASE_HEADING_WEIGHT: f64 = 0.1;
const BASE_CONTROL_WEIGHT: f64 = 0.1;
const BASE_TERMINAL_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Overtake,
    Merge,
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// One agent broadcasts a cost it does not optimize.
    Faulty,
    /// Every broadcast is the true cost.
    Truthful,
    /// Faulty, with several alternatives for the faulty agent (overtake only).
    MultiHypothesis,
}

/// Which of an agent's hypotheses the others consider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HypothesisPolicy {
    /// Only the broadcast cost; beliefs never change.
    CommunicatedOnly,
    /// Only the alternatives, starting from a uniform belief.
    AlternativesOnly,
    /// Broadcast plus alternatives, starting from full trust.
    #[default]
    Full,
}

/// Diagonal quadratic cost on one agent's own state block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Desired `(px, py, theta, v)`.
    pub target: [f64; STATE_DIM],
    /// Weights on `(px, py, theta, v)`.
    pub weights: [f64; STATE_DIM],
    /// Weights on `(omega, a)`.
    pub control_weights: [f64; 2],
    /// `Qf = terminal_scale · Q`.
    pub terminal_scale: f64,
}

impl CostParams {
    /// Lane keeping at `y` and speed tracking at `v`, with the default weights
    /// and the lane weight scaled by `lane_scale`.
    pub fn lane(y: f64, v: f64, lane_scale: f64) -> Self {
        Self {
            target: [0.0, y, 0.0, v],
            weights: [0.0, BASE_LANE_WEIGHT * lane_scale, BASE_HEADING_WEIGHT, BASE_SPEED_WEIGHT],
            control_weights: [BASE_CONTROL_WEIGHT; 2],
            terminal_scale: BASE_TERMINAL_SCALE,
        }
    }

    /// Expands to a joint-state cost for `agent` among `n_agents`.
    pub fn to_cost(&self, agent: usize, n_agents: usize) -> Result<QuadraticCost, Error> {
        if agent >= n_agents {
            return Err(Error::invalid("agent index out of range"));
        }
        let n = n_agents * STATE_DIM;
        let mut q = vec![0.0; n];
        let mut xf = vec![0.0; n];
        q[agent * STATE_DIM..(agent + 1) * STATE_DIM].copy_from_slice(&self.weights);
        xf[agent * STATE_DIM..(agent + 1) * STATE_DIM].copy_from_slice(&self.target);
        QuadraticCost::diagonal(&q, self.control_weights, self.terminal_scale, &xf)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub name: String,
    pub initial: AgentState,
    pub true_cost: CostParams,
    pub broadcast_cost: CostParams,
    /// Alternatives the other agents hold about this agent.
    pub alternatives: Vec<CostParams>,
    /// Position that ends the run once every agent with a goal is near it.
    pub goal: Option<[f64; 2]>,
}

impl AgentSpec {
    pub fn is_faulty(&self) -> bool {
        self.true_cost != self.broadcast_cost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub points: Vec<[f64; 2]>,
    pub inside: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub variant: Variant,
    pub agents: Vec<AgentSpec>,
    pub boundaries: Vec<BoundarySpec>,
    /// Vehicle disc radius `r`: clearance to road edges, and `d_min = 2r`.
    pub vehicle_radius: f64,
    /// Center distance the planners keep between vehicles.
    pub pair_clearance: f64,
    /// Number of states in a planned trajectory.
    pub horizon: usize,
    /// Steps executed between replans (`H_N`), also the observation window.
    pub executed_steps: usize,
    pub dt: f64,
    /// Simulation length in steps.
    pub total_steps: usize,
    pub goal_radius: f64,
    pub gamma: f64,
    pub mode: PerceptionMode,
    pub hypothesis_policy: HypothesisPolicy,
    /// Score only the observed agent's sub-state instead of the joint state.
    pub target_scope: bool,
    /// Multiplicative control noise amplitude.
    pub noise: f64,
    pub seed: u64,
    /// Agent whose cost and acceleration the metrics report.
    pub ego: usize,
}

impl ScenarioConfig {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Collision threshold of the metrics.
    pub fn d_min(&self) -> f64 {
        2.0 * self.vehicle_radius
    }

    pub fn initial_state(&self) -> JointState {
        JointState(self.agents.iter().map(|a| a.initial).collect())
    }

    pub fn constraint_set(&self) -> Result<ConstraintSet, Error> {
        let boundaries =
            self.boundaries.iter().map(|b| Boundary::new(b.points.clone(), b.inside)).collect::<Result<Vec<_>, _>>()?;
        ConstraintSet::new(self.pair_clearance, boundaries)?.with_boundary_clearance(self.vehicle_radius)
    }

    pub fn true_costs(&self) -> Result<Vec<QuadraticCost>, Error> {
        let n = self.n_agents();
        self.agents.iter().enumerate().map(|(i, a)| a.true_cost.to_cost(i, n)).collect()
    }

    pub fn broadcast_costs(&self) -> Result<Vec<QuadraticCost>, Error> {
        let n = self.n_agents();
        self.agents.iter().enumerate().map(|(i, a)| a.broadcast_cost.to_cost(i, n)).collect()
    }

    /// What the others consider about `agent`: its broadcast plus its
    /// alternatives.
    pub fn hypothesis_set(&self, agent: usize) -> Result<HypothesisSet, Error> {
        let n = self.n_agents();
        let spec = self.agents.get(agent).ok_or_else(|| Error::invalid("agent index out of range"))?;
        let alternatives = spec.alternatives.iter().map(|c| c.to_cost(agent, n)).collect::<Result<Vec<_>, _>>()?;
        HypothesisSet::new(spec.broadcast_cost.to_cost(agent, n)?, alternatives)
    }

    /// The game every agent would play with full information.
    pub fn full_information_game(&self) -> Result<GameDefinition, Error> {
        GameDefinition::new(self.horizon, self.dt, self.true_costs()?, self.constraint_set()?)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_policy(mut self, policy: HypothesisPolicy) -> Self {
        self.hypothesis_policy = policy;
        self
    }

    /// Checks the structural invariants and that the start is feasible.
    pub fn validate(&self) -> Result<(), Error> {
        if self.agents.is_empty() {
            return Err(Error::invalid("scenario has no agents"));
        }
        if self.ego >= self.n_agents() {
            return Err(Error::invalid("ego agent out of range"));
        }
        if self.horizon < 2 || self.executed_steps == 0 || self.executed_steps >= self.horizon {
            return Err(Error::invalid("need 1 <= executed steps < horizon"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("update rate must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::invalid("noise must lie in [0, 1)"));
        }
        if !(self.vehicle_radius > 0.0 && self.pair_clearance > 0.0 && self.goal_radius > 0.0) {
            return Err(Error::invalid("radii must be positive"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !a.initial.is_finite() {
                return Err(Error::invalid(alloc::format!("agent {i} has a non-finite start")));
            }
            if self.hypothesis_policy == HypothesisPolicy::AlternativesOnly
                && a.alternatives.is_empty()
                && a.is_faulty()
            {
                return Err(Error::invalid(alloc::format!("agent {i} is faulty but has no alternatives")));
            }
            self.hypothesis_set(i)?;
        }
        self.true_costs()?;
        let cs = self.constraint_set()?;
        let start = StateTrajectory(vec![self.initial_state()]);
        if evaluate_constraints(&start, &cs).iter().any(|&c| c > 0.0) {
            return Err(Error::invalid("initial state violates a constraint"));
        }
        Ok(())
    }
}

fn base(kind: ScenarioKind, variant: Variant, agents: Vec<AgentSpec>, boundaries: Vec<BoundarySpec>) -> ScenarioConfig {
    ScenarioConfig {
        kind,
        variant,
        agents,
        boundaries,
        vehicle_radius: VEHICLE_RADIUS,
        pair_clearance: 2.8 * VEHICLE_RADIUS,
        horizon: 20,
        executed_steps: 5,
        dt: 0.1,
        total_steps: 120,
        goal_radius: 1.0,
        gamma: 0.6,
        mode: PerceptionMode::Argmax,
        hypothesis_policy: HypothesisPolicy::Full,
        target_scope: false,
        noise: 0.0,
        seed: 0,
        ego: 0,
    }
}

fn straight_road(y_low: f64, y_high: f64) -> Vec<BoundarySpec> {
    vec![
        BoundarySpec { points: vec![[-200.0, y_low], [600.0, y_low]], inside: Side::Left },
        BoundarySpec { points: vec![[-200.0, y_high], [600.0, y_high]], inside: Side::Right },
    ]
}

fn agent(
    name: &str,
    initial: AgentState,
    truth: CostParams,
    broadcast: CostParams,
    alternatives: Vec<CostParams>,
) -> AgentSpec {
    AgentSpec { name: name.into(), initial, true_cost: truth, broadcast_cost: broadcast, alternatives, goal: None }
}

/// Two-lane highway; `v1` is fast and behind the slow `v2` in the left lane.
/// `v2` announces that it will move right.
pub fn build_overtake(variant: Variant) -> ScenarioConfig {
    let (v1_speed, v2_speed) = (8.0, 4.0);
    let fast = CostParams::lane(LEFT_LANE_Y, v1_speed, 1.0);
    let move_right = CostParams::lane(RIGHT_LANE_Y, v2_speed, 1.0);
    let keep_left = CostParams::lane(LEFT_LANE_Y, v2_speed, 1.0);
    let alternatives = match variant {
        Variant::MultiHypothesis => vec![
            CostParams::lane(LEFT_LANE_Y, v2_speed, 0.25),
            CostParams::lane(LEFT_LANE_Y, v2_speed, 0.05),
            CostParams::lane(RIGHT_LANE_Y, v2_speed / 3.0, 1.0),
        ],
        _ => vec![keep_left],
    };
    let v2_truth = if variant == Variant::Truthful { move_right } else { keep_left };
    let agents = vec![
        agent("v1", AgentState::new(0.0, LEFT_LANE_Y, 0.0, v1_speed), fast, fast, vec![]),
        agent("v2", AgentState::new(8.0, LEFT_LANE_Y, 0.0, v2_speed), v2_truth, move_right, alternatives),
    ];
    let mut cfg = base(ScenarioKind::Overtake, variant, agents, straight_road(0.0, 2.0 * LANE_WIDTH));
    cfg.total_steps = 60;
    cfg
}

/// Lower road edge of the merge scene: the on-ramp runs alongside the right
/// lane and tapers shut over `MERGE_RAMP_LENGTH`.
pub fn merge_lower_edge() -> Vec<[f64; 2]> {
    vec![
        [-200.0, -LANE_WIDTH],
        [MERGE_TAPER_START_X, -LANE_WIDTH],
        [MERGE_TAPER_START_X + MERGE_RAMP_LENGTH, 0.0],
        [600.0, 0.0],
    ]
}

/// Thin barrier between the on-ramp and the right lane, ending where the
/// taper starts; drivable on both sides.
pub fn merge_island() -> Vec<[f64; 2]> {
    let w = 0.5 * MERGE_ISLAND_WIDTH;
    vec![[-200.0, -w], [MERGE_TAPER_START_X, -w], [MERGE_TAPER_START_X, w], [-200.0, w], [-200.0, -w]]
}

/// `v1` drives in the right lane and announces it will yield but keeps its
/// speed; `v2` merges from the on-ramp; `v3` is fast in the left lane.
pub fn build_merge(variant: Variant) -> ScenarioConfig {
    let keep = CostParams::lane(RIGHT_LANE_Y, 8.0, 1.0);
    let yielding = CostParams::lane(RIGHT_LANE_Y, 4.0, 1.0);
    let accelerate = CostParams::lane(RIGHT_LANE_Y, 11.0, 0.1);
    let v1_truth = if variant == Variant::Truthful { yielding } else { keep };
    let merging = CostParams::lane(RIGHT_LANE_Y, 6.0, 1.0);
    let fast = CostParams::lane(LEFT_LANE_Y, 10.0, 1.0);
    let agents = vec![
        agent("v1", AgentState::new(-6.0, RIGHT_LANE_Y, 0.0, 8.0), v1_truth, yielding, vec![keep, accelerate]),
        agent("v2", AgentState::new(0.0, RAMP_LANE_Y, 0.0, 6.0), merging, merging, vec![]),
        agent("v3", AgentState::new(-10.0, LEFT_LANE_Y, 0.0, 10.0), fast, fast, vec![]),
    ];
    let boundaries = vec![
        BoundarySpec { points: merge_lower_edge(), inside: Side::Left },
        BoundarySpec { points: merge_island(), inside: Side::Right },
        BoundarySpec { points: vec![[-200.0, 2.0 * LANE_WIDTH], [600.0, 2.0 * LANE_WIDTH]], inside: Side::Right },
    ];
    let mut cfg = base(ScenarioKind::Merge, variant, agents, boundaries);
    cfg.ego = 1;
    cfg.total_steps = 80;
    cfg
}

/// Time step at which `v2` (agent 1) first reaches the main carriageway
/// (`py ≥ 0`), and whether `v1` (agent 0) is ahead of it at that moment.
pub fn merge_order(traj: &StateTrajectory) -> Option<(usize, bool)> {
    traj.states().iter().enumerate().find(|(_, x)| x.0[1].py >= 0.0).map(|(t, x)| (t, x.0[0].px > x.0[1].px))
}

/// Cost tracking a goal position and heading at cruise speed.
fn goal_cost(goal: [f64; 2], heading: f64, speed: f64, position_weight: f64, speed_scale: f64) -> CostParams {
    CostParams {
        target: [goal[0], goal[1], heading, speed],
        weights: [position_weight, position_weight, BASE_HEADING_WEIGHT, BASE_SPEED_WEIGHT * speed_scale],
        control_weights: [BASE_CONTROL_WEIGHT; 2],
        terminal_scale: BASE_TERMINAL_SCALE,
    }
}

/// Four-way crossing of two two-lane roads centered at the origin; right-hand
/// traffic. `v1` drives west to east, `v2` east to west, `v3` north to south
/// and `v4` turns left from the south arm into the west arm. `v4` announces
/// that it will yield but is aggressive.
pub fn build_intersection(variant: Variant) -> ScenarioConfig {
    let h = LANE_WIDTH;
    let c = 0.5 * LANE_WIDTH;
    let far = 60.0;
    let w = 0.02;
    let cruise = 6.0;
    let v1 = goal_cost([far, -c], 0.0, cruise, w, 1.0);
    let v2 = goal_cost([-far, c], PI, cruise, w, 1.0);
    let v3 = goal_cost([-c, -far], -FRAC_PI_2, cruise, w, 1.0);
    let yielding = goal_cost([-far, c], PI, 2.0, w, 1.0);
    let aggressive = goal_cost([-far, c], PI, 9.0, w, 4.0);
    let v4_truth = if variant == Variant::Truthful { yielding } else { aggressive };
    let mut agents = vec![
        agent("v1", AgentState::new(-34.0, -c, 0.0, cruise), v1, v1, vec![]),
        agent("v2", AgentState::new(18.0, c, PI, cruise), v2, v2, vec![]),
        agent("v3", AgentState::new(-c, 24.0, -FRAC_PI_2, cruise), v3, v3, vec![]),
        agent("v4", AgentState::new(c, -26.0, FRAC_PI_2, cruise), v4_truth, yielding, vec![aggressive]),
    ];
    agents[0].goal = Some([far, -c]);
    agents[1].goal = Some([-far, c]);
    agents[2].goal = Some([-c, -far]);
    agents[3].goal = Some([-far, c]);
    let l = 200.0;
    let boundaries = vec![
        BoundarySpec { points: vec![[h, l], [h, h], [l, h]], inside: Side::Right },
        BoundarySpec { points: vec![[-l, h], [-h, h], [-h, l]], inside: Side::Right },
        BoundarySpec { points: vec![[-h, -l], [-h, -h], [-l, -h]], inside: Side::Right },
        BoundarySpec { points: vec![[l, -h], [h, -h], [h, -l]], inside: Side::Right },
    ];
    let mut cfg = base(ScenarioKind::Intersection, variant, agents, boundaries);
    cfg.ego = 1;
    cfg.gamma = 0.4;
    cfg.total_steps = 80;
    cfg
}

pub fn build(kind: ScenarioKind, variant: Variant) -> ScenarioConfig {
    match kind {
        ScenarioKind::Overtake => build_overtake(variant),
        ScenarioKind::Merge => build_merge(variant),
        ScenarioKind::Intersection => build_intersection(variant),
    }
}
