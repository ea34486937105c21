//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use nashguard::bench::run_bench;
use nashguard::{metrics_for, run_trials, sweep_gamma, Comm, TrialSpec};
use nashguard_core::dynamics::{
    linearize, rollout, step_joint, AgentControl, AgentState, JointControl, JointState, Policy, StateTrajectory,
};
use nashguard_core::game::{
    constraint_jacobian, evaluate_constraints, stage_cost, stage_cost_gradient, total_cost, Boundary, ConstraintSet,
    GameDefinition, NashSolution, NashSolver, QuadraticCost, Side,
};
use nashguard_core::hypothesis::{solve_likelihoods, DisparityScores};
use nashguard_core::planner::{build_planners, run_simulation, CommunicationChannel};
use nashguard_core::scenarios::{build, merge_order, CostParams, HypothesisPolicy, ScenarioKind, Variant};
use nashguard_core::SolveError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn solve(game: &GameDefinition, x0: &JointState) -> NashSolution {
    match NashSolver::default().solve(game, x0, None) {
        Ok(s) => s,
        Err(SolveError::MaxIterationsExceeded { best }) => *best,
        Err(e) => panic!("solve failed: {e}"),
    }
}

fn random_state(rng: &mut ChaCha8Rng, n_agents: usize) -> JointState {
    JointState(
        (0..n_agents)
            .map(|_| {
                let mut r = || rng.random_range(-10.0..10.0);
                AgentState::new(r(), r(), r(), r())
            })
            .collect(),
    )
}

fn central(f: &dyn Fn(&[f64]) -> Vec<f64>, at: &[f64], col: usize) -> Vec<f64> {
    const H: f64 = 1e-6;
    let (mut a, mut b) = (at.to_vec(), at.to_vec());
    a[col] += H;
    b[col] -= H;
    f(&a).iter().zip(f(&b)).map(|(p, m)| (p - m) / (2.0 * H)).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut dyn_err, mut cost_err, mut jac_err) = (0.0f64, 0.0f64, 0.0f64);
    let cs = ConstraintSet::new(
        2.0,
        vec![
            Boundary::segment([-30.0, -12.0], [30.0, -12.0], Side::Left).unwrap(),
            Boundary::new(vec![[3.0, 30.0], [3.0, 3.0], [30.0, 3.0]], Side::Right).unwrap(),
        ],
    )
    .unwrap()
    .with_boundary_clearance(1.0)
    .unwrap();
    for _ in 0..100 {
        let na = rng.random_range(1..=3);
        let x = random_state(&mut rng, na);
        let u = JointControl(
            (0..na).map(|_| AgentControl::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))).collect(),
        );
        let (a, b) = linearize(&x, &u, 0.1).unwrap();
        let flat = x.to_flat();
        let ux: Vec<f64> = u.0.iter().flat_map(|c| [c.omega, c.a]).collect();
        let fx = |v: &[f64]| step_joint(&JointState::from_flat(v), &u, 0.1).unwrap().to_flat();
        let fu = |v: &[f64]| {
            let c = JointControl(v.chunks(2).map(|c| AgentControl::new(c[0], c[1])).collect());
            step_joint(&x, &c, 0.1).unwrap().to_flat()
        };
        for col in 0..flat.len() {
            for (row, d) in central(&fx, &flat, col).iter().enumerate() {
                dyn_err = dyn_err.max((a[(row, col)] - d).abs());
            }
        }
        for col in 0..ux.len() {
            for (row, d) in central(&fu, &ux, col).iter().enumerate() {
                dyn_err = dyn_err.max((b[(row, col)] - d).abs());
            }
        }
    }
    for _ in 0..100 {
        let na = rng.random_range(1..=3);
        let n = 4 * na;
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = &m * m.transpose();
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.6]);
        let xf = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
        let cost = QuadraticCost::new(q.clone(), r, q * 10.0, xf).unwrap();
        let x = random_state(&mut rng, na);
        let u = AgentControl::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let (gx, gu) = stage_cost_gradient(&x, &u, &cost).unwrap();
        let flat = x.to_flat();
        let fx = |v: &[f64]| vec![stage_cost(&JointState::from_flat(v), &u, &cost).unwrap()];
        let fu = |v: &[f64]| vec![stage_cost(&x, &AgentControl::new(v[0], v[1]), &cost).unwrap()];
        for (col, g) in gx.iter().enumerate() {
            cost_err = cost_err.max((g - central(&fx, &flat, col)[0]).abs());
        }
        for (col, g) in gu.iter().enumerate() {
            cost_err = cost_err.max((g - central(&fu, &[u.omega, u.a], col)[0]).abs());
        }
    }
    for _ in 0..100 {
        let na = rng.random_range(1..=3);
        let steps = rng.random_range(1..=3);
        let traj = StateTrajectory((0..steps).map(|_| random_state(&mut rng, na)).collect());
        let flat: Vec<f64> = traj.states().iter().flat_map(|x| x.to_flat()).collect();
        let f = |v: &[f64]| {
            evaluate_constraints(&StateTrajectory(v.chunks(4 * na).map(JointState::from_flat).collect()), &cs)
        };
        let jac = constraint_jacobian(&traj, &cs);
        for col in 0..flat.len() {
            for (row, d) in central(&f, &flat, col).iter().enumerate() {
                jac_err = jac_err.max((jac[(row, col)] - d).abs());
            }
        }
    }
    let t = start.elapsed();
    let worst = dyn_err.max(cost_err).max(jac_err);
    outcome(
        worst < 1e-6 && within(t, 10.0),
        format!(
            "max |analytic - FD|: dynamics {dyn_err:.1e}, cost {cost_err:.1e}, constraints {jac_err:.1e}; {:.2} s",
            t.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut residual, mut scale_err) = (0.0f64, 0.0f64);
    let mut rank_ok = true;
    for _ in 0..1000 {
        let len = rng.random_range(2..=7);
        let d: Vec<f64> = (0..len).map(|_| 10f64.powf(rng.random_range(-4.0..3.0))).collect();
        let l = solve_likelihoods(&DisparityScores::new(d.clone())).unwrap();
        let l = l.as_slice();
        residual = residual.max((l.iter().sum::<f64>() - 1.0).abs());
        for k in 1..len {
            residual = residual.max((l[0] - d[k] / d[0] * l[k]).abs());
        }
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled = solve_likelihoods(&DisparityScores::new(d.iter().map(|x| x * c).collect())).unwrap();
        for (a, b) in l.iter().zip(scaled.as_slice()) {
            scale_err = scale_err.max((a - b).abs());
        }
        for i in 0..len {
            for j in 0..len {
                if d[i] < d[j] && l[i] <= l[j] {
                    rank_ok = false;
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        residual < 1e-10 && scale_err < 1e-10 && rank_ok && within(t, 5.0),
        format!(
            "equation residual {residual:.1e}, scale drift {scale_err:.1e}, inverse ranking {rank_ok}; {:.2} s",
            t.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let params = [CostParams::lane(1.0, 9.0, 1.0), CostParams::lane(998.0, 4.0, 2.0)];
    let starts = [AgentState::new(0.0, 0.0, 0.0, 6.0), AgentState::new(0.0, 1000.0, 0.1, 5.0)];
    let open = || ConstraintSet::new(2.8, vec![]).unwrap();
    let joint =
        GameDefinition::new(20, 0.1, vec![params[0].to_cost(0, 2).unwrap(), params[1].to_cost(1, 2).unwrap()], open())
            .unwrap();
    let both = solve(&joint, &JointState(starts.to_vec()));
    let mut split = 0.0f64;
    for (i, (p, s)) in params.iter().zip(starts).enumerate() {
        let single = GameDefinition::new(20, 0.1, vec![p.to_cost(0, 1).unwrap()], open()).unwrap();
        let alone = solve(&single, &JointState(vec![s]));
        for (a, b) in both.trajectory.states().iter().zip(alone.trajectory.states()) {
            for (x, y) in a.0[i].as_array().iter().zip(b.0[0].as_array()) {
                split = split.max((x - y).abs());
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_gain = f64::NEG_INFINITY;
    let mut feasible = 0;
    let mut tried = 0;
    for kind in [ScenarioKind::Overtake, ScenarioKind::Merge, ScenarioKind::Intersection] {
        let cfg = build(kind, Variant::Faulty);
        let planners = build_planners(&cfg).unwrap();
        let game = planners[cfg.ego].perceived_game(CommunicationChannel::collect(&planners).broadcasts()).unwrap();
        let x0 = cfg.initial_state();
        let sol = solve(&game, &x0);
        for i in 0..game.n_agents() {
            let base = total_cost(&sol.trajectory, &sol.policy.per_agent[i], &game.costs()[i]).unwrap();
            for _ in 0..50 {
                tried += 1;
                let mut p: Policy = sol.policy.clone();
                let mut delta: Vec<f64> = (0..2 * p.steps()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
                let r = rng.random_range(0.0..1e-2);
                delta.iter_mut().for_each(|d| *d *= r / norm);
                for (u, d) in p.per_agent[i].iter_mut().zip(delta.chunks(2)) {
                    *u = AgentControl::new(u.omega + d[0], u.a + d[1]);
                }
                let traj = rollout(&x0, &p, game.dt()).unwrap();
                if evaluate_constraints(&traj.window(1, game.horizon()), game.constraints()).iter().any(|&c| c > 0.0) {
                    continue;
                }
                feasible += 1;
                let j = total_cost(&traj, &p.per_agent[i], &game.costs()[i]).unwrap();
                worst_gain = worst_gain.max(base - j);
            }
        }
    }
    outcome(
        split < 1e-6 && worst_gain <= 1e-6 && feasible > 0,
        format!(
            "decoupled vs single-agent max state gap {split:.1e}; largest unilateral improvement {worst_gain:.1e} over {feasible}/{tried} feasible deviations"
        ),
    )
}

fn criterion_4() -> Outcome {
    let report = run_bench(5, 100).unwrap();
    outcome(
        report.solve.seconds <= 1.0 && report.ratio() >= 100.0,
        format!(
            "merge H=20 solve {:.3} s ({} iterations), likelihood update {:.1e} s, ratio {:.0}x",
            report.solve.seconds,
            report.solve_iterations,
            report.update.seconds,
            report.ratio()
        ),
    )
}

fn timed_run(
    cfg: &nashguard_core::scenarios::ScenarioConfig,
) -> (nashguard_core::planner::SimulationLog, nashguard::MetricsRecord, f64) {
    let t = Instant::now();
    let log = run_simulation(cfg).unwrap();
    let m = metrics_for(cfg, &log).unwrap();
    (log, m, t.elapsed().as_secs_f64())
}

fn criterion_5() -> Outcome {
    let overtake = build(ScenarioKind::Overtake, Variant::Faulty).with_gamma(0.6);
    let (_, adaptive, t1) = timed_run(&overtake);
    let (_, frozen, t2) = timed_run(&overtake.clone().with_policy(HypothesisPolicy::CommunicatedOnly));
    let a = adaptive.d > 1.0 && adaptive.d > frozen.d;

    let merge = build(ScenarioKind::Merge, Variant::Faulty).with_gamma(0.6);
    let (log, m, t3) = timed_run(&merge);
    let order = merge_order(&log.trajectory);
    let b = matches!(order, Some((_, true))) && m.d > 1.0;

    let inter = build(ScenarioKind::Intersection, Variant::Faulty).with_gamma(0.4);
    let (_, comm_only, t4) = timed_run(&inter.clone().with_policy(HypothesisPolicy::CommunicatedOnly));
    let (_, adapt, t5) = timed_run(&inter);
    let c = comm_only.crash && !adapt.crash;
    let slowest = [t1, t2, t3, t4, t5].into_iter().fold(0.0, f64::max);
    outcome(
        a && b && c && slowest < 60.0,
        format!(
            "(a) overtake d {:.3} adaptive vs {:.3} comm-only [{}]; (b) merge v2 enters at step {:?} behind v1, d {:.3} [{}]; (c) intersection crash comm-only {} adaptive {} [{}]; slowest run {:.1} s",
            adaptive.d,
            frozen.d,
            a,
            order.map(|o| o.0),
            m.d,
            b,
            comm_only.crash,
            adapt.crash,
            c,
            slowest
        ),
    )
}

fn criterion_6() -> Outcome {
    let gammas = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0];
    let multi = build(ScenarioKind::Overtake, Variant::MultiHypothesis);
    let points = sweep_gamma(&multi, &gammas).unwrap();
    let high_safe = points.iter().filter(|p| p.gamma >= 0.8).all(|p| !p.metrics.crash);
    let frozen_cfg = build(ScenarioKind::Overtake, Variant::Faulty).with_gamma(0.0);
    let log = run_simulation(&frozen_cfg).unwrap();
    let constant = log.belief_trace(0, 1).windows(2).all(|w| w[0].lambdas == w[1].lambdas);
    let ds: Vec<String> = points.iter().map(|p| format!("{}:{:.2}", p.gamma, p.metrics.d)).collect();
    outcome(
        high_safe && constant,
        format!("multi-hypothesis d by gamma [{}]; gamma 0 belief constant {constant}", ds.join(" ")),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let merge = build(ScenarioKind::Merge, Variant::Faulty);
    let cell = |comm, hypotheses| {
        run_trials(&merge, &TrialSpec { n: 20, comm, hypotheses, noise: 0.2, ..TrialSpec::default() }).unwrap()
    };
    let f_ic = cell(Comm::Faulty, HypothesisPolicy::CommunicatedOnly);
    let f_full = cell(Comm::Faulty, HypothesisPolicy::Full);
    let c_ic = cell(Comm::Correct, HypothesisPolicy::CommunicatedOnly);
    let c_full = cell(Comm::Correct, HypothesisPolicy::Full);
    let t = start.elapsed();
    let ordering = f_ic.risky_rate > f_full.risky_rate;
    let full_runs = f_full.n + c_full.n;
    let no_crash = f_full.crash_rate == 0.0 && c_full.crash_rate == 0.0 && full_runs == 40;
    let close = (c_full.d_mean - c_ic.d_mean).abs() <= 0.05 * c_ic.d_mean;
    outcome(
        ordering && no_crash && close && within(t, 1800.0),
        format!(
            "faulty risky Ic {:.0}% vs full {:.0}%; full-set crashes {}/{} completed; correct d full {:.3} vs Ic {:.3}; {:.0} s",
            100.0 * f_ic.risky_rate,
            100.0 * f_full.risky_rate,
            f_full.records.iter().chain(&c_full.records).filter(|r| r.crash).count(),
            full_runs,
            c_full.d_mean,
            c_ic.d_mean,
            t.as_secs_f64()
        ),
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_nashguard");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases: [(&[&str], bool); 4] = [
        (
            &[
                "run",
                "--scenario",
                "overtake",
                "--variant",
                "faulty",
                "--gamma",
                "0.6",
                "--seed",
                "1",
                "--noise",
                "0.1",
            ],
            true,
        ),
        (
            &[
                "trials",
                "--scenario",
                "merge",
                "--n",
                "3",
                "--noise",
                "0.2",
                "--comm",
                "faulty",
                "--hypotheses",
                "Ic,I1,I2",
            ],
            true,
        ),
        (&["sweep", "--scenario", "overtake", "--variant", "multi", "--gamma", "0,0.8"], true),
        (&["bench", "--n", "1"], false),
    ];
    let mut failures = Vec::new();
    for (args, compare_stdout) in cases {
        let mut seen = Vec::new();
        for threads in ["1", "2"] {
            let _ = std::fs::remove_dir_all(&out);
            let res =
                Command::new(bin).args(args).arg("--out").arg(&out).env("NASHGUARD_THREADS", threads).output().unwrap();
            if !res.status.success() {
                failures.push(format!("{} exited {:?}", args[0], res.status.code()));
            }
            seen.push((if compare_stdout { res.stdout } else { Vec::new() }, read_tree(&out)));
        }
        if seen[0] != seen[1] || seen[0].1.is_empty() {
            failures.push(format!("{} differs", args[0]));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "run, trials, sweep and bench outputs byte-identical across invocations".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 derivatives", criterion_1),
        ("2 likelihood algebra", criterion_2),
        ("3 Nash solver oracles", criterion_3),
        ("4 solver performance", criterion_4),
        ("5 scenario behaviour", criterion_5),
        ("6 update-rate sweep", criterion_6),
        ("7 randomized trials", criterion_7),
        ("8 determinism", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = check();
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
