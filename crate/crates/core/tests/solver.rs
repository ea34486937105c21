use nashguard_core::dynamics::{rollout, AgentControl, AgentState, JointState, Policy};
use nashguard_core::game::{
    evaluate_constraints, nash_residual, residual_breakdown, total_cost, ConstraintSet, GameDefinition, NashSolution,
    NashSolver, QuadraticCost,
};
use nashguard_core::planner::{build_planners, CommunicationChannel};
use nashguard_core::scenarios::{build, CostParams, ScenarioKind, Variant};
use nashguard_core::SolveError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: usize = 20;
const DT: f64 = 0.1;

fn solve(game: &GameDefinition, x0: &JointState) -> NashSolution {
    match NashSolver::default().solve(game, x0, None) {
        Ok(s) => s,
        Err(SolveError::MaxIterationsExceeded { best }) => *best,
        Err(e) => panic!("solve failed: {e}"),
    }
}

fn open_road(radius: f64) -> ConstraintSet {
    ConstraintSet::new(radius, vec![]).unwrap()
}

#[test]
fn distant_agents_decouple() {
    let params = [CostParams::lane(1.0, 9.0, 1.0), CostParams::lane(998.0, 4.0, 2.0)];
    let starts = [AgentState::new(0.0, 0.0, 0.0, 6.0), AgentState::new(0.0, 1000.0, 0.1, 5.0)];
    let joint = GameDefinition::new(
        H,
        DT,
        vec![params[0].to_cost(0, 2).unwrap(), params[1].to_cost(1, 2).unwrap()],
        open_road(2.8),
    )
    .unwrap();
    let both = solve(&joint, &JointState(starts.to_vec()));
    for (i, (p, s)) in params.iter().zip(starts).enumerate() {
        let single = GameDefinition::new(H, DT, vec![p.to_cost(0, 1).unwrap()], open_road(2.8)).unwrap();
        let alone = solve(&single, &JointState(vec![s]));
        for (a, b) in both.policy.per_agent[i].iter().zip(&alone.policy.per_agent[0]) {
            assert!((a.omega - b.omega).abs() < 1e-6 && (a.a - b.a).abs() < 1e-6, "{a:?} vs {b:?}");
        }
    }
}

fn first_episode_game(kind: ScenarioKind) -> (GameDefinition, JointState) {
    let config = build(kind, Variant::Faulty);
    let planners = build_planners(&config).unwrap();
    let channel = CommunicationChannel::collect(&planners);
    (planners[config.ego].perceived_game(channel.broadcasts()).unwrap(), config.initial_state())
}

fn perturbed(policy: &Policy, agent: usize, rng: &mut ChaCha8Rng) -> Policy {
    let mut p = policy.clone();
    let seq = &mut p.per_agent[agent];
    let mut delta: Vec<f64> = (0..2 * seq.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
    let scale = rng.random_range(0.0..1e-2) / norm;
    delta.iter_mut().for_each(|d| *d *= scale);
    for (u, d) in seq.iter_mut().zip(delta.chunks(2)) {
        *u = AgentControl::new(u.omega + d[0], u.a + d[1]);
    }
    p
}

#[test]
fn no_feasible_unilateral_deviation_improves() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in [ScenarioKind::Overtake, ScenarioKind::Merge, ScenarioKind::Intersection] {
        let (game, x0) = first_episode_game(kind);
        let sol = solve(&game, &x0);
        assert!(sol.residual_norm < 1e-3, "{kind:?}: residual {}", sol.residual_norm);
        let h = game.horizon();
        let mut checked = 0;
        for i in 0..game.n_agents() {
            let base = total_cost(&sol.trajectory, &sol.policy.per_agent[i], &game.costs()[i]).unwrap();
            for _ in 0..50 {
                let p = perturbed(&sol.policy, i, &mut rng);
                let traj = rollout(&x0, &p, game.dt()).unwrap();
                if evaluate_constraints(&traj.window(1, h), game.constraints()).iter().any(|&c| c > 0.0) {
                    continue;
                }
                checked += 1;
                let j = total_cost(&traj, &p.per_agent[i], &game.costs()[i]).unwrap();
                assert!(j >= base - 1e-6, "{kind:?}: agent {i} improves {base} -> {j}");
            }
        }
        assert!(checked > 0, "{kind:?}: no feasible perturbation");
    }
}

#[test]
fn warm_restart_from_solution_is_immediate() {
    let (game, x0) = first_episode_game(ScenarioKind::Overtake);
    let sol = solve(&game, &x0);
    let again = NashSolver::default().solve(&game, &x0, Some(&sol)).unwrap();
    assert!(again.iterations <= 2, "{} iterations", again.iterations);
}

#[test]
fn zero_cost_rollouts_have_zero_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n_agents = 2;
    let game = GameDefinition::new(H, DT, vec![QuadraticCost::zero(8); n_agents], open_road(1.0)).unwrap();
    let x0 = JointState(vec![AgentState::new(0.0, 0.0, 0.0, 1.0), AgentState::new(0.0, 500.0, 0.0, 1.0)]);
    for _ in 0..20 {
        let flat: Vec<f64> = (0..n_agents * (H - 1) * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let policy = Policy::from_flat(n_agents, H - 1, &flat);
        let sol = NashSolution {
            trajectory: rollout(&x0, &policy, DT).unwrap(),
            policy,
            eq_multipliers: vec![vec![0.0; (H - 1) * 8]; n_agents],
            ineq_multipliers: vec![0.0; game.n_inequalities()],
            penalty: 1.0,
            residual_norm: 0.0,
            iterations: 0,
            wall_time: 0.0,
        };
        assert!(residual_breakdown(&game, &x0, &sol).norm() < 1e-12);
    }
}

#[test]
fn perturbing_a_control_raises_the_residual() {
    let (game, x0) = first_episode_game(ScenarioKind::Overtake);
    let sol = solve(&game, &x0);
    let base = nash_residual(&game, &x0, &sol);
    for agent in 0..game.n_agents() {
        let mut bad = sol.clone();
        bad.policy.per_agent[agent][3].a += 0.1;
        bad.trajectory = rollout(&x0, &bad.policy, game.dt()).unwrap();
        assert!(nash_residual(&game, &x0, &bad) > base);
    }
}
