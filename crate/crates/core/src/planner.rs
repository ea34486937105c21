//! Decentralized receding-horizon planning with intention inference.
//!
//! Each [`AgentPlanner`] repeats: receive the broadcast costs, form the
//! perceived game from its beliefs, solve it, execute the first `H_N`
//! controls, observe what everybody did and update its beliefs about each
//! other agent. [`run_simulation`] runs all planners in synchronous lockstep.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{step_joint, AgentControl, JointControl, JointState, StateTrajectory};
use crate::error::{Error, SolveError};
use crate::game::{ConstraintSet, GameDefinition, NashSolution, NashSolver, QuadraticCost, SolverSettings};
use crate::hypothesis::{
    form_perceived_cost, score_predictions, update_belief, DisparityScope, DisparityScores, FilterSettings,
    HypothesisSet, LikelihoodVector, PerceptionMode,
};
use crate::scenarios::{HypothesisPolicy, ScenarioConfig};

/// Fraction of an attainable distance used when a clearance is relaxed.
const SHRINK: f64 = 0.99;
const MIN_CLEARANCE: f64 = 1e-3;
/// Initial penalty multiplier of the second attempt after a failed solve.
/// A stiffer start keeps iterates from tunnelling through thin obstacles.
const RETRY_PENALTY: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSettings {
    /// States per planned trajectory (`H`).
    pub horizon: usize,
    /// Controls executed per episode (`H_N`).
    pub executed_steps: usize,
    pub dt: f64,
    pub gamma: f64,
    pub mode: PerceptionMode,
    /// Score only the observed agent's sub-state.
    pub target_scope: bool,
    pub filter: FilterSettings,
    pub solver: SolverSettings,
    /// Seed every solve with the shifted previous solution. When off, every
    /// solve starts from zero controls, so agents holding the same perceived
    /// game compute the same equilibrium.
    pub warm_start: bool,
    /// A solve that hits its iteration limit is still used when its residual
    /// is at most this.
    pub accept_residual: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            horizon: 20,
            executed_steps: 5,
            dt: 0.1,
            gamma: 0.6,
            mode: PerceptionMode::Argmax,
            target_scope: false,
            filter: FilterSettings::default(),
            solver: SolverSettings::default(),
            warm_start: false,
            accept_residual: 1e-3,
        }
    }
}

/// How an episode's controls were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeFlag {
    Solved,
    /// Iteration limit hit; the best iterate was close enough to use.
    Approximate,
    /// Solve failed; the previous plan was shifted forward.
    ShiftedPrevious,
    /// Solve failed with no previous plan; brake to a stop.
    Braking,
}

/// One slot of a belief over another agent's cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Candidate {
    Communicated,
    Alternative(usize),
}

#[derive(Debug, Clone)]
struct TargetModel {
    candidates: Vec<Candidate>,
    alternatives: Vec<QuadraticCost>,
    belief: LikelihoodVector,
}

impl TargetModel {
    fn new(alternatives: Vec<QuadraticCost>, policy: HypothesisPolicy) -> Self {
        let (candidates, belief) = match policy {
            _ if alternatives.is_empty() => (vec![Candidate::Communicated], LikelihoodVector::trusting(1)),
            HypothesisPolicy::CommunicatedOnly => (vec![Candidate::Communicated], LikelihoodVector::trusting(1)),
            HypothesisPolicy::AlternativesOnly => {
                let c: Vec<_> = (0..alternatives.len()).map(Candidate::Alternative).collect();
                let n = c.len();
                (c, LikelihoodVector::uniform(n))
            }
            HypothesisPolicy::Full => {
                let c: Vec<_> = core::iter::once(Candidate::Communicated)
                    .chain((0..alternatives.len()).map(Candidate::Alternative))
                    .collect();
                let n = c.len();
                (c, LikelihoodVector::trusting(n))
            }
        };
        Self { candidates, alternatives, belief }
    }

    fn costs(&self, communicated: &QuadraticCost) -> Vec<QuadraticCost> {
        self.candidates
            .iter()
            .map(|c| match c {
                Candidate::Communicated => communicated.clone(),
                Candidate::Alternative(k) => self.alternatives[*k].clone(),
            })
            .collect()
    }
}

/// Result of one planning step.
#[derive(Debug, Clone)]
pub struct EpisodePlan {
    /// The planning agent's controls for the next `H_N` steps.
    pub controls: Vec<AgentControl>,
    /// Equilibrium of the perceived game, when the solve succeeded.
    pub solution: Option<NashSolution>,
    pub flag: EpisodeFlag,
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: f64,
}

/// Belief update about one other agent.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefUpdate {
    pub target: usize,
    pub scores: DisparityScores,
    pub belief: LikelihoodVector,
}

#[derive(Debug, Clone)]
struct Pending {
    x_start: JointState,
    game: GameDefinition,
    received: Vec<QuadraticCost>,
    solution: Option<NashSolution>,
}

/// On-board planner of one agent.
#[derive(Debug, Clone)]
pub struct AgentPlanner {
    id: usize,
    true_cost: QuadraticCost,
    broadcast_cost: QuadraticCost,
    constraints: ConstraintSet,
    settings: PlannerSettings,
    targets: Vec<Option<TargetModel>>,
    previous: Option<NashSolution>,
    /// Last equilibrium of every game version, per target, for warm starts.
    version_cache: Vec<Vec<Option<NashSolution>>>,
    pending: Option<Pending>,
}

impl AgentPlanner {
    /// `alternatives[j]` lists the alternatives this planner considers for
    /// agent `j` (the entry for `id` is ignored).
    pub fn new(
        id: usize,
        true_cost: QuadraticCost,
        broadcast_cost: QuadraticCost,
        alternatives: Vec<Vec<QuadraticCost>>,
        constraints: ConstraintSet,
        policy: HypothesisPolicy,
        settings: PlannerSettings,
    ) -> Result<Self, Error> {
        let n_agents = alternatives.len();
        if id >= n_agents {
            return Err(Error::invalid("planner id out of range"));
        }
        if settings.executed_steps == 0 || settings.executed_steps >= settings.horizon {
            return Err(Error::invalid("need 1 <= executed steps < horizon"));
        }
        if !(0.0..=1.0).contains(&settings.gamma) {
            return Err(Error::invalid("update rate must lie in [0, 1]"));
        }
        let targets: Vec<_> = alternatives
            .into_iter()
            .enumerate()
            .map(|(j, alts)| (j != id).then(|| TargetModel::new(alts, policy)))
            .collect();
        let version_cache = targets.iter().map(|t| vec![None; t.as_ref().map_or(0, |t| t.candidates.len())]).collect();
        Ok(Self {
            id,
            true_cost,
            broadcast_cost,
            constraints,
            settings,
            targets,
            previous: None,
            version_cache,
            pending: None,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn n_agents(&self) -> usize {
        self.targets.len()
    }

    /// What this agent tells the others.
    pub fn broadcast(&self) -> &QuadraticCost {
        &self.broadcast_cost
    }

    pub fn settings(&self) -> &PlannerSettings {
        &self.settings
    }

    /// Current belief about agent `j` (`None` for the planner itself).
    pub fn belief(&self, j: usize) -> Option<&LikelihoodVector> {
        self.targets.get(j).and_then(|t| t.as_ref()).map(|t| &t.belief)
    }

    /// Perceived game: own true cost, and for every other agent the cost
    /// selected from its hypotheses by the current belief.
    pub fn perceived_game(&self, received: &[QuadraticCost]) -> Result<GameDefinition, Error> {
        Error::check_len(self.n_agents(), received.len())?;
        let mut costs = Vec::with_capacity(self.n_agents());
        for (j, target) in self.targets.iter().enumerate() {
            match target {
                None => costs.push(self.true_cost.clone()),
                Some(t) => {
                    let mut candidates = t.costs(&received[j]).into_iter();
                    let first = candidates.next().expect("at least one candidate");
                    let set = HypothesisSet::new(first, candidates.collect())?;
                    costs.push(form_perceived_cost(&t.belief, &set, self.settings.mode)?);
                }
            }
        }
        GameDefinition::new(self.settings.horizon, self.settings.dt, costs, self.constraints.clone())
    }

    /// The first planned positions are fixed by `x`. When they already sit
    /// inside a clearance, that clearance is shrunk to what is attainable so
    /// the game stays feasible.
    fn relaxed_constraints(&self, x: &JointState) -> Result<ConstraintSet, Error> {
        let cs = &self.constraints;
        let next = step_joint(x, &JointControl::zeros(x.n_agents()), self.settings.dt)?;
        let pos: Vec<[f64; 2]> = next.0.iter().map(|a| a.position()).collect();
        let mut radius = cs.radius();
        for (i, p) in pos.iter().enumerate() {
            for q in &pos[i + 1..] {
                radius = radius.min(SHRINK * libm::hypot(p[0] - q[0], p[1] - q[1]));
            }
        }
        let mut clearance = cs.boundary_clearance();
        for b in cs.boundaries() {
            for p in &pos {
                clearance = clearance.min(SHRINK * b.distance(*p));
            }
        }
        if radius == cs.radius() && clearance == cs.boundary_clearance() {
            return Ok(cs.clone());
        }
        ConstraintSet::new(radius.max(MIN_CLEARANCE), cs.boundaries().to_vec())?
            .with_boundary_clearance(clearance.max(MIN_CLEARANCE))
    }

    fn game_at(&self, x: &JointState, received: &[QuadraticCost]) -> Result<GameDefinition, Error> {
        let game = self.perceived_game(received)?;
        let cs = self.relaxed_constraints(x)?;
        GameDefinition::new(game.horizon(), game.dt(), game.costs().to_vec(), cs)
    }

    fn solver(&self) -> NashSolver {
        NashSolver::new(self.settings.solver.clone())
    }

    fn attempt(
        &self,
        solver: &NashSolver,
        game: &GameDefinition,
        x: &JointState,
        warm: Option<&NashSolution>,
    ) -> Result<(NashSolution, bool), SolveError> {
        match solver.solve(game, x, warm) {
            Ok(sol) => Ok((sol, true)),
            Err(SolveError::MaxIterationsExceeded { best }) if best.residual_norm <= self.settings.accept_residual => {
                Ok((*best, false))
            }
            Err(e) => Err(e),
        }
    }

    /// Solves `game`, retrying once with a stiffer initial penalty. The flag
    /// is false when only an approximate iterate was accepted.
    fn solve(
        &self,
        game: &GameDefinition,
        x: &JointState,
        warm: Option<&NashSolution>,
    ) -> Result<(NashSolution, bool), SolveError> {
        match self.attempt(&self.solver(), game, x, warm) {
            Err(SolveError::Input(e)) => Err(SolveError::Input(e)),
            Err(_) => {
                let mut stiff = self.settings.solver.clone();
                stiff.penalty_init = (stiff.penalty_init * RETRY_PENALTY).min(stiff.penalty_max);
                self.attempt(&NashSolver::new(stiff), game, x, warm)
            }
            done => done,
        }
    }

    /// Solves the perceived game from `x` and returns this agent's next
    /// `H_N` controls. `received[j]` is agent `j`'s broadcast.
    pub fn plan_episode(&mut self, x: &JointState, received: &[QuadraticCost]) -> Result<EpisodePlan, Error> {
        Error::check_len(self.n_agents(), x.n_agents())?;
        let game = self.game_at(x, received)?;
        let (hn, dt) = (self.settings.executed_steps, self.settings.dt);
        let warm = match &self.previous {
            Some(prev) => Some(prev.shifted(hn, x, dt)?),
            None => None,
        };
        let seed = warm.as_ref().filter(|_| self.settings.warm_start);
        let plan = match self.solve(&game, x, seed) {
            Ok((sol, exact)) => {
                let controls = sol.policy.per_agent[self.id][..hn].to_vec();
                EpisodePlan {
                    controls,
                    iterations: sol.iterations,
                    residual: sol.residual_norm,
                    wall_time: sol.wall_time,
                    flag: if exact { EpisodeFlag::Solved } else { EpisodeFlag::Approximate },
                    solution: Some(sol),
                }
            }
            Err(SolveError::Input(e)) => return Err(e),
            Err(err) => {
                let (iterations, residual) = match err.best_iterate() {
                    Some(b) => (b.iterations, b.residual_norm),
                    None => (0, f64::INFINITY),
                };
                let (controls, flag) = match &warm {
                    Some(w) => (w.policy.per_agent[self.id][..hn].to_vec(), EpisodeFlag::ShiftedPrevious),
                    None => {
                        let v = x.0[self.id].v;
                        (vec![AgentControl::new(0.0, -v / (hn as f64 * dt)); hn], EpisodeFlag::Braking)
                    }
                };
                EpisodePlan { controls, solution: None, flag, iterations, residual, wall_time: 0.0 }
            }
        };
        self.previous = plan.solution.clone().or(warm);
        self.pending =
            Some(Pending { x_start: x.clone(), game, received: received.to_vec(), solution: plan.solution.clone() });
        Ok(plan)
    }

    /// Scores every hypothesis about every other agent against the executed
    /// window `obs` (starting at the last planning state) and fuses the
    /// estimates into the beliefs.
    pub fn observe_and_update(&mut self, obs: &StateTrajectory) -> Result<Vec<BeliefUpdate>, Error> {
        let Some(pending) = self.pending.take() else {
            return Err(Error::invalid("no plan to compare the observation with"));
        };
        if obs.is_empty() || obs.len() > self.settings.horizon {
            return Err(Error::invalid("observation window must hold 1..=H states"));
        }
        Error::check_len(self.n_agents(), obs.n_agents())?;
        if obs.states()[0] != pending.x_start {
            return Err(Error::invalid("observation does not start at the planning state"));
        }
        let gamma = self.settings.gamma;
        let mut updates = Vec::new();
        for j in 0..self.n_agents() {
            let Some(target) = &self.targets[j] else { continue };
            if target.candidates.len() < 2 || gamma == 0.0 {
                continue;
            }
            let plan_cost = &pending.game.costs()[j];
            let mut predictions = Vec::with_capacity(target.candidates.len());
            for (k, cost) in target.costs(&pending.received[j]).into_iter().enumerate() {
                if &cost == plan_cost && pending.solution.is_some() {
                    predictions.push(pending.solution.clone());
                    continue;
                }
                let version = pending.game.with_cost(j, cost);
                let warm = self.version_cache[j][k]
                    .as_ref()
                    .and_then(|c| c.shifted(self.settings.executed_steps, &pending.x_start, self.settings.dt).ok())
                    .or_else(|| pending.solution.clone())
                    .filter(|_| self.settings.warm_start);
                let sol = match self.solve(&version, &pending.x_start, warm.as_ref()) {
                    Ok((s, _)) => Some(s),
                    Err(SolveError::Input(e)) => return Err(e),
                    Err(_) => None,
                };
                predictions.push(sol);
            }
            let mut filter = self.settings.filter;
            if self.settings.target_scope {
                filter.scope = DisparityScope::Agent(j);
            }
            let scores = score_predictions(obs, &predictions, &filter)?;
            let target = self.targets[j].as_mut().expect("checked above");
            target.belief = update_belief(&target.belief, &scores, gamma)?;
            self.version_cache[j] = predictions;
            updates.push(BeliefUpdate { target: j, scores, belief: target.belief.clone() });
        }
        Ok(updates)
    }
}

/// Broadcast messages of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunicationChannel {
    broadcasts: Vec<QuadraticCost>,
}

impl CommunicationChannel {
    /// Collects one broadcast per planner.
    pub fn collect(planners: &[AgentPlanner]) -> Self {
        Self { broadcasts: planners.iter().map(|p| p.broadcast().clone()).collect() }
    }

    pub fn broadcasts(&self) -> &[QuadraticCost] {
        &self.broadcasts
    }
}

/// Belief of `observer` about `target` after `episode` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefRecord {
    pub episode: usize,
    pub observer: usize,
    pub target: usize,
    pub lambdas: Vec<f64>,
    /// Disparities behind this belief (empty for the initial belief).
    pub disparities: Vec<f64>,
    /// Hypotheses whose game failed to solve and got a surrogate disparity.
    pub surrogate: Vec<bool>,
}

/// Planning statistics of one agent in one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub episode: usize,
    pub agent: usize,
    pub flag: EpisodeFlag,
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub dt: f64,
    pub executed_steps: usize,
    /// Executed joint states, starting at the initial state.
    pub trajectory: StateTrajectory,
    /// Executed (noisy) joint controls; one fewer than states.
    pub controls: Vec<JointControl>,
    pub beliefs: Vec<BeliefRecord>,
    pub solves: Vec<SolveRecord>,
    pub episodes: usize,
}

impl SimulationLog {
    /// Copy with all wall-clock measurements zeroed, for replay comparisons.
    pub fn without_timing(&self) -> Self {
        let mut log = self.clone();
        log.solves.iter_mut().for_each(|s| s.wall_time = 0.0);
        log
    }

    /// Beliefs of `observer` about `target`, one per episode.
    pub fn belief_trace(&self, observer: usize, target: usize) -> Vec<&BeliefRecord> {
        self.beliefs.iter().filter(|b| b.observer == observer && b.target == target).collect()
    }
}

/// Builds the planner of every agent in `config`.
pub fn build_planners(config: &ScenarioConfig) -> Result<Vec<AgentPlanner>, Error> {
    config.validate()?;
    let n = config.n_agents();
    let truth = config.true_costs()?;
    let broadcast = config.broadcast_costs()?;
    let alternatives: Vec<Vec<QuadraticCost>> =
        (0..n).map(|j| config.hypothesis_set(j).map(|h| h.alternatives)).collect::<Result<_, _>>()?;
    let settings = PlannerSettings {
        horizon: config.horizon,
        executed_steps: config.executed_steps,
        dt: config.dt,
        gamma: config.gamma,
        mode: config.mode,
        target_scope: config.target_scope,
        ..PlannerSettings::default()
    };
    let cs = config.constraint_set()?;
    (0..n)
        .map(|i| {
            AgentPlanner::new(
                i,
                truth[i].clone(),
                broadcast[i].clone(),
                alternatives.clone(),
                cs.clone(),
                config.hypothesis_policy,
                settings.clone(),
            )
        })
        .collect()
}

fn noisy(u: AgentControl, noise: f64, rng: &mut ChaCha8Rng) -> AgentControl {
    if noise == 0.0 {
        return u;
    }
    let eta_w: f64 = rng.random_range(-noise..=noise);
    let eta_a: f64 = rng.random_range(-noise..=noise);
    AgentControl::new(u.omega * (1.0 + eta_w), u.a * (1.0 + eta_a))
}

fn record_beliefs(
    planners: &[AgentPlanner],
    episode: usize,
    updates: &[Vec<BeliefUpdate>],
    out: &mut Vec<BeliefRecord>,
) {
    for p in planners {
        for j in 0..p.n_agents() {
            let Some(belief) = p.belief(j) else { continue };
            let update = updates.get(p.id()).and_then(|u| u.iter().find(|u| u.target == j));
            out.push(BeliefRecord {
                episode,
                observer: p.id(),
                target: j,
                lambdas: belief.as_slice().to_vec(),
                disparities: update.map(|u| u.scores.values.clone()).unwrap_or_default(),
                surrogate: update.map(|u| u.scores.failed.clone()).unwrap_or_default(),
            });
        }
    }
}

/// Runs every agent's planner in synchronous episodes until `total_steps`
/// have been executed or every agent with a goal is within `goal_radius` of
/// it.
pub fn run_simulation(config: &ScenarioConfig) -> Result<SimulationLog, Error> {
    let mut planners = build_planners(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = config.initial_state();
    let mut states = vec![x.clone()];
    let mut controls = Vec::new();
    let mut beliefs = Vec::new();
    let mut solves = Vec::new();
    record_beliefs(&planners, 0, &[], &mut beliefs);

    let mut episode = 0;
    while controls.len() < config.total_steps && !goals_reached(config, &x) {
        let channel = CommunicationChannel::collect(&planners);
        let mut plans = Vec::with_capacity(planners.len());
        for p in planners.iter_mut() {
            let plan = p.plan_episode(&x, channel.broadcasts())?;
            solves.push(SolveRecord {
                episode,
                agent: p.id(),
                flag: plan.flag,
                iterations: plan.iterations,
                residual: plan.residual,
                wall_time: plan.wall_time,
            });
            plans.push(plan);
        }
        let steps = config.executed_steps.min(config.total_steps - controls.len());
        let start = states.len() - 1;
        for k in 0..steps {
            let u = JointControl(plans.iter().map(|p| noisy(p.controls[k], config.noise, &mut rng)).collect());
            x = step_joint(&x, &u, config.dt)?;
            controls.push(u);
            states.push(x.clone());
        }
        let obs = StateTrajectory(states[start..].to_vec());
        let updates = planners.iter_mut().map(|p| p.observe_and_update(&obs)).collect::<Result<Vec<_>, _>>()?;
        episode += 1;
        record_beliefs(&planners, episode, &updates, &mut beliefs);
    }
    Ok(SimulationLog {
        dt: config.dt,
        executed_steps: config.executed_steps,
        trajectory: StateTrajectory(states),
        controls,
        beliefs,
        solves,
        episodes: episode,
    })
}

fn goals_reached(config: &ScenarioConfig, x: &JointState) -> bool {
    let mut any = false;
    for (a, s) in config.agents.iter().zip(&x.0) {
        match a.goal {
            Some(g) => {
                any = true;
                if libm::hypot(s.px - g[0], s.py - g[1]) >= config.goal_radius {
                    return false;
                }
            }
            None => return false,
        }
    }
    any
}
