use nashguard_core::dynamics::{step_joint, AgentState, JointControl, JointState};
use nashguard_core::game::{total_cost, ConstraintSet, GameDefinition, NashSolver};
use nashguard_core::planner::run_simulation;
use nashguard_core::scenarios::{build, CostParams, HypothesisPolicy, ScenarioConfig, ScenarioKind, Variant};
use nashguard_core::SolveError;

fn solo_config(total_steps: usize) -> ScenarioConfig {
    let mut config = build(ScenarioKind::Overtake, Variant::Truthful);
    let mut agent = config.agents[config.ego].clone();
    agent.initial = AgentState::new(0.0, 0.0, 0.0, 6.0);
    agent.true_cost = CostParams::lane(1.85, 8.0, 1.0);
    agent.broadcast_cost = agent.true_cost;
    agent.alternatives.clear();
    agent.goal = None;
    config.agents = vec![agent];
    config.boundaries.clear();
    config.ego = 0;
    config.total_steps = total_steps;
    config
}

#[test]
fn receding_horizon_cost_is_close_to_single_shot() {
    let config = solo_config(19);
    let log = run_simulation(&config).unwrap();
    let cost = &config.true_costs().unwrap()[0];
    let executed: Vec<_> = log.controls.iter().map(|u| u.0[0]).collect();
    let mpc = total_cost(&log.trajectory, &executed, cost).unwrap();

    let game =
        GameDefinition::new(config.horizon, config.dt, vec![cost.clone()], config.constraint_set().unwrap()).unwrap();
    let opt = NashSolver::default().solve(&game, &config.initial_state(), None).unwrap();
    let best = total_cost(&opt.trajectory, &opt.policy.per_agent[0], cost).unwrap();
    assert!(mpc >= best - 1e-9 && mpc <= 1.05 * best, "mpc {mpc} vs single shot {best}");
}

#[test]
fn zero_rate_freezes_beliefs() {
    let config = build(ScenarioKind::Overtake, Variant::Faulty).with_gamma(0.0);
    let log = run_simulation(&config).unwrap();
    assert!(log.episodes > 1);
    for o in 0..config.n_agents() {
        for t in (0..config.n_agents()).filter(|&t| t != o) {
            let trace = log.belief_trace(o, t);
            assert!(trace.windows(2).all(|w| w[0].lambdas == w[1].lambdas));
        }
    }
}

#[test]
fn replay_is_bit_identical() {
    let mut config = build(ScenarioKind::Overtake, Variant::Faulty);
    config.noise = 0.2;
    config.seed = 3;
    let a = run_simulation(&config).unwrap().without_timing();
    let b = run_simulation(&config).unwrap().without_timing();
    assert_eq!(a, b);
    config.seed = 4;
    assert_ne!(a.trajectory, run_simulation(&config).unwrap().without_timing().trajectory);
}

#[test]
fn beliefs_depend_only_on_past_observations() {
    let mut short = build(ScenarioKind::Overtake, Variant::Faulty);
    short.noise = 0.1;
    short.total_steps = 20;
    let mut long = short.clone();
    long.total_steps = 60;
    let a = run_simulation(&short).unwrap();
    let b = run_simulation(&long).unwrap();
    assert!(b.episodes > a.episodes);
    let prefix: Vec<_> = b.beliefs.iter().filter(|r| r.episode <= a.episodes).cloned().collect();
    assert_eq!(a.beliefs, prefix);
    assert_eq!(a.trajectory.states(), &b.trajectory.states()[..a.trajectory.len()]);
}

/// Shrinks the clearances to 99% of what the coasting next positions allow.
fn relaxed(game: &GameDefinition, x: &JointState, dt: f64) -> GameDefinition {
    let cs = game.constraints();
    let next = step_joint(x, &JointControl::zeros(x.n_agents()), dt).unwrap();
    let pos: Vec<[f64; 2]> = next.0.iter().map(|a| a.position()).collect();
    let mut radius = cs.radius();
    let mut clearance = cs.boundary_clearance();
    for (i, p) in pos.iter().enumerate() {
        for q in &pos[i + 1..] {
            radius = radius.min(0.99 * (p[0] - q[0]).hypot(p[1] - q[1]));
        }
        for b in cs.boundaries() {
            clearance = clearance.min(0.99 * b.distance(*p));
        }
    }
    let cs = ConstraintSet::new(radius.max(1e-3), cs.boundaries().to_vec())
        .unwrap()
        .with_boundary_clearance(clearance.max(1e-3))
        .unwrap();
    GameDefinition::new(game.horizon(), game.dt(), game.costs().to_vec(), cs).unwrap()
}

/// Every agent plays the same full-information game, so a single central
/// solve per episode reproduces the decentralized run.
fn full_information_mpc(config: &ScenarioConfig) -> Vec<JointState> {
    let full = config.full_information_game().unwrap();
    let solver = NashSolver::default();
    let mut x = config.initial_state();
    let mut states = vec![x.clone()];
    while states.len() - 1 < config.total_steps {
        let game = relaxed(&full, &x, config.dt);
        let sol = match solver.solve(&game, &x, None) {
            Ok(s) => s,
            Err(SolveError::MaxIterationsExceeded { best }) if best.residual_norm <= 1e-3 => *best,
            Err(e) => panic!("oracle solve failed: {e}"),
        };
        let steps = config.executed_steps.min(config.total_steps + 1 - states.len());
        for k in 0..steps {
            x = step_joint(&x, &JointControl(sol.policy.per_agent.iter().map(|s| s[k]).collect()), config.dt).unwrap();
            states.push(x.clone());
        }
    }
    states
}

#[test]
fn truthful_run_matches_full_information_mpc() {
    for kind in [ScenarioKind::Overtake, ScenarioKind::Merge] {
        let mut config = build(kind, Variant::Truthful).with_policy(HypothesisPolicy::CommunicatedOnly);
        config.total_steps = 30;
        let log = run_simulation(&config).unwrap();
        let oracle = full_information_mpc(&config);
        assert_eq!(log.trajectory.len(), oracle.len());
        for (a, b) in log.trajectory.states().iter().zip(&oracle) {
            for (p, q) in a.to_flat().iter().zip(b.to_flat()) {
                assert!((p - q).abs() < 1e-6, "{kind:?}: {a:?} vs {b:?}");
            }
        }
    }
}
