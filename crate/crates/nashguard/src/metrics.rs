use nashguard_core::dynamics::AgentControl;
use nashguard_core::game::{total_cost, QuadraticCost};
use nashguard_core::planner::SimulationLog;
use nashguard_core::scenarios::{HypothesisPolicy, ScenarioConfig};
use nashguard_core::Error;

use crate::trials::Comm;

/// Normalized distance at or below which a run counts as risky.
pub const RISKY_THRESHOLD: f64 = 1.3;
/// Normalized distance at or below which a run counts as a crash.
pub const CRASH_THRESHOLD: f64 = 1.0;

/// Safety and comfort summary of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    /// Smallest pairwise center distance over the run divided by `d_min`
    /// (infinite with a single agent).
    pub d: f64,
    pub risky: bool,
    pub crash: bool,
    /// Ego cost over the executed trajectory and controls.
    pub j: f64,
    /// Largest executed |a| of the ego.
    pub acc_max: f64,
}

pub fn compute_metrics(
    log: &SimulationLog,
    d_min: f64,
    ego: usize,
    ego_cost: &QuadraticCost,
) -> Result<MetricsRecord, Error> {
    if log.trajectory.is_empty() || d_min.is_nan() || d_min <= 0.0 {
        return Err(Error::InvalidInput("metrics need a non-empty log and a positive d_min".into()));
    }
    if ego >= log.trajectory.n_agents() {
        return Err(Error::InvalidInput("ego agent out of range".into()));
    }
    let mut closest = f64::INFINITY;
    for x in log.trajectory.states() {
        for (i, a) in x.0.iter().enumerate() {
            for b in &x.0[i + 1..] {
                closest = closest.min((a.px - b.px).hypot(a.py - b.py));
            }
        }
    }
    let d = closest / d_min;
    let controls: Vec<AgentControl> = log.controls.iter().map(|u| u.0[ego]).collect();
    let j = total_cost(&log.trajectory, &controls, ego_cost)?;
    let acc_max = controls.iter().fold(0.0, |m: f64, u| m.max(u.a.abs()));
    Ok(MetricsRecord { d, risky: d <= RISKY_THRESHOLD, crash: d <= CRASH_THRESHOLD, j, acc_max })
}

/// Metrics of a run of `config`, scored with the ego's true cost.
pub fn metrics_for(config: &ScenarioConfig, log: &SimulationLog) -> Result<MetricsRecord, Error> {
    let cost = config.agents[config.ego].true_cost.to_cost(config.ego, config.n_agents())?;
    compute_metrics(log, config.d_min(), config.ego, &cost)
}

/// Aggregate over the completed runs of one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub comm: Comm,
    pub hypotheses: HypothesisPolicy,
    /// Completed runs.
    pub n: usize,
    /// Runs whose simulation returned an error; excluded from the statistics.
    pub failures: usize,
    pub d_mean: f64,
    /// Sample standard deviation (zero for a single run).
    pub d_std: f64,
    pub risky_rate: f64,
    pub crash_rate: f64,
    pub j_mean: f64,
    pub acc_max_mean: f64,
    pub records: Vec<MetricsRecord>,
}

impl TrialSummary {
    pub fn from_records(
        comm: Comm,
        hypotheses: HypothesisPolicy,
        records: Vec<MetricsRecord>,
        failures: usize,
    ) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&MetricsRecord) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let d_mean = mean(&|r| r.d);
        let d_std = if n > 1 {
            (records.iter().map(|r| (r.d - d_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            comm,
            hypotheses,
            n,
            failures,
            d_mean,
            d_std,
            risky_rate: mean(&|r| f64::from(u8::from(r.risky))),
            crash_rate: mean(&|r| f64::from(u8::from(r.crash))),
            j_mean: mean(&|r| r.j),
            acc_max_mean: mean(&|r| r.acc_max),
            records,
        }
    }

    /// Pools several conditions into one row (the "Total" rows of the table).
    pub fn pooled(comm: Comm, parts: &[&TrialSummary]) -> Self {
        let hypotheses = parts.first().map_or(HypothesisPolicy::Full, |p| p.hypotheses);
        let records = parts.iter().flat_map(|p| p.records.iter().copied()).collect();
        let failures = parts.iter().map(|p| p.failures).sum();
        Self::from_records(comm, hypotheses, records, failures)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nashguard_core::dynamics::{AgentState, JointControl, JointState, StateTrajectory};

    fn log_at_distance(gap: f64, steps: usize) -> SimulationLog {
        let state = JointState(vec![AgentState::new(0.0, 0.0, 0.0, 0.0), AgentState::new(gap, 0.0, 0.0, 0.0)]);
        SimulationLog {
            dt: 0.1,
            executed_steps: 1,
            trajectory: StateTrajectory(vec![state; steps + 1]),
            controls: vec![JointControl::zeros(2); steps],
            beliefs: vec![],
            solves: vec![],
            episodes: steps,
        }
    }

    #[test]
    fn risky_but_not_crashed() {
        let m = compute_metrics(&log_at_distance(2.4, 4), 2.0, 0, &QuadraticCost::zero(8)).unwrap();
        assert!((m.d - 1.2).abs() < 1e-12);
        assert!(m.risky && !m.crash);
    }

    #[test]
    fn crash_below_threshold() {
        let m = compute_metrics(&log_at_distance(1.8, 4), 2.0, 0, &QuadraticCost::zero(8)).unwrap();
        assert!(m.crash && m.risky);
    }

    #[test]
    fn resting_at_goal_costs_nothing() {
        let cost =
            QuadraticCost::diagonal(&[1.0; 8], [1.0, 1.0], 10.0, &[0.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0]).unwrap();
        let m = compute_metrics(&log_at_distance(5.0, 6), 2.0, 1, &cost).unwrap();
        assert_eq!((m.j, m.acc_max), (0.0, 0.0));
        assert!(!m.risky);
    }

    #[test]
    fn thresholds_are_inclusive() {
        let m = compute_metrics(&log_at_distance(2.6, 1), 2.0, 0, &QuadraticCost::zero(8)).unwrap();
        assert!(m.risky);
        let m = compute_metrics(&log_at_distance(2.0, 1), 2.0, 0, &QuadraticCost::zero(8)).unwrap();
        assert!(m.crash);
    }

    #[test]
    fn summary_statistics() {
        let rec = |d: f64| MetricsRecord { d, risky: d <= 1.3, crash: d <= 1.0, j: 2.0 * d, acc_max: 1.0 };
        let s = TrialSummary::from_records(
            Comm::Faulty,
            HypothesisPolicy::Full,
            vec![rec(0.9), rec(1.2), rec(1.5), rec(2.0)],
            1,
        );
        assert_eq!((s.n, s.failures), (4, 1));
        assert!((s.d_mean - 1.4).abs() < 1e-12);
        assert!((s.d_std - (0.66f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!((s.risky_rate, s.crash_rate), (0.5, 0.25));
        assert!((s.j_mean - 2.8).abs() < 1e-12);
        let total = TrialSummary::pooled(Comm::Faulty, &[&s, &s]);
        assert_eq!((total.n, total.failures), (8, 2));
    }
}
