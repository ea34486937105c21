//! Randomized robustness trials and update-rate sweeps.
//!
//! Runs are independent and execute on a rayon pool whose size comes from
//! `NASHGUARD_THREADS` (default: all cores). All randomness is drawn up
//! front from `TrialSpec::seed`, so results do not depend on the worker count.

use std::fmt;

use nashguard_core::planner::{run_simulation, SimulationLog};
use nashguard_core::scenarios::{HypothesisPolicy, ScenarioConfig};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::metrics::{metrics_for, MetricsRecord, TrialSummary};
use crate::HarnessError;

pub const THREADS_ENV: &str = "NASHGUARD_THREADS";

/// Whether the faulty agent's broadcast matches what it does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Comm {
    Faulty,
    Correct,
}

impl Comm {
    pub const ALL: [Comm; 2] = [Comm::Faulty, Comm::Correct];

    pub fn label(self) -> &'static str {
        match self {
            Comm::Faulty => "faulty",
            Comm::Correct => "correct",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "faulty" => Ok(Comm::Faulty),
            "correct" => Ok(Comm::Correct),
            other => Err(HarnessError::usage(format!("unknown communication condition `{other}` (faulty|correct)"))),
        }
    }

    /// `config` with this condition applied. Correct communication makes
    /// every agent optimize the cost it broadcasts.
    pub fn apply(self, mut config: ScenarioConfig) -> ScenarioConfig {
        if self == Comm::Correct {
            for a in &mut config.agents {
                a.true_cost = a.broadcast_cost;
            }
        }
        config
    }
}

impl fmt::Display for Comm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub const HYPOTHESIS_SETS: [HypothesisPolicy; 3] =
    [HypothesisPolicy::CommunicatedOnly, HypothesisPolicy::AlternativesOnly, HypothesisPolicy::Full];

pub fn hypotheses_label(p: HypothesisPolicy) -> &'static str {
    match p {
        HypothesisPolicy::CommunicatedOnly => "Ic",
        HypothesisPolicy::AlternativesOnly => "I1,I2",
        HypothesisPolicy::Full => "Ic,I1,I2",
    }
}

/// Parses `Ic`, `I1,I2` or `Ic,I1,I2` (case and spaces ignored).
pub fn parse_hypotheses(s: &str) -> Result<HypothesisPolicy, HarnessError> {
    let norm: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
    let mut parts: Vec<&str> = norm.split(',').filter(|p| !p.is_empty()).collect();
    parts.sort_unstable();
    match parts.as_slice() {
        ["ic"] => Ok(HypothesisPolicy::CommunicatedOnly),
        ["i1", "i2"] => Ok(HypothesisPolicy::AlternativesOnly),
        ["i1", "i2", "ic"] => Ok(HypothesisPolicy::Full),
        _ => Err(HarnessError::usage(format!("unknown hypothesis set `{s}` (Ic | I1,I2 | Ic,I1,I2)"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub n: usize,
    pub hypotheses: HypothesisPolicy,
    pub comm: Comm,
    /// Multiplicative control noise amplitude.
    pub noise: f64,
    pub seed: u64,
    /// Half-width of the uniform longitudinal start offset, per agent.
    pub jitter_m: f64,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self { n: 20, hypotheses: HypothesisPolicy::Full, comm: Comm::Faulty, noise: 0.2, seed: 0, jitter_m: 5.0 }
    }
}

impl TrialSpec {
    fn check(&self) -> Result<(), HarnessError> {
        if self.n == 0 {
            return Err(HarnessError::usage("need at least one trial"));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(HarnessError::usage("noise must lie in [0, 1)"));
        }
        if !(self.jitter_m.is_finite() && self.jitter_m >= 0.0) {
            return Err(HarnessError::usage("jitter must be non-negative"));
        }
        Ok(())
    }
}

/// The scenario of every trial: condition applied, starts shifted along
/// their headings and a fresh simulation seed each.
pub fn trial_configs(config: &ScenarioConfig, spec: &TrialSpec) -> Result<Vec<ScenarioConfig>, HarnessError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = spec.comm.apply(config.clone()).with_policy(spec.hypotheses);
    Ok((0..spec.n)
        .map(|_| {
            let mut c = base.clone();
            for a in &mut c.agents {
                let shift = spec.jitter_m * rng.random_range(-1.0..=1.0);
                a.initial.px += shift * a.initial.theta.cos();
                a.initial.py += shift * a.initial.theta.sin();
            }
            c.noise = spec.noise;
            c.seed = rng.next_u64();
            c
        })
        .collect())
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub index: usize,
    pub seed: u64,
    pub result: Result<MetricsRecord, String>,
}

pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool() -> Result<rayon::ThreadPool, HarnessError> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build()?)
}

fn run_one(config: &ScenarioConfig) -> Result<(SimulationLog, MetricsRecord), nashguard_core::Error> {
    let log = run_simulation(config)?;
    let m = metrics_for(config, &log)?;
    Ok((log, m))
}

/// Every trial of `spec`, in order.
pub fn run_trial_runs(config: &ScenarioConfig, spec: &TrialSpec) -> Result<Vec<TrialRun>, HarnessError> {
    let configs = trial_configs(config, spec)?;
    let pool = pool()?;
    Ok(pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(index, c)| TrialRun {
                index,
                seed: c.seed,
                result: run_one(c).map(|(_, m)| m).map_err(|e| e.to_string()),
            })
            .collect()
    }))
}

pub fn summarize(spec: &TrialSpec, runs: &[TrialRun]) -> TrialSummary {
    let records = runs.iter().filter_map(|r| r.result.as_ref().ok().copied()).collect();
    let failures = runs.iter().filter(|r| r.result.is_err()).count();
    TrialSummary::from_records(spec.comm, spec.hypotheses, records, failures)
}

pub fn run_trials(config: &ScenarioConfig, spec: &TrialSpec) -> Result<TrialSummary, HarnessError> {
    Ok(summarize(spec, &run_trial_runs(config, spec)?))
}

/// One run of an update-rate sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub gamma: f64,
    pub log: SimulationLog,
    pub metrics: MetricsRecord,
}

pub fn sweep_gamma(config: &ScenarioConfig, gammas: &[f64]) -> Result<Vec<SweepPoint>, HarnessError> {
    if let Some(g) = gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(HarnessError::usage(format!("update rate {g} outside [0, 1]")));
    }
    let pool = pool()?;
    pool.install(|| {
        gammas
            .par_iter()
            .map(|&gamma| {
                let c = config.clone().with_gamma(gamma);
                let (log, metrics) = run_one(&c)?;
                Ok(SweepPoint { gamma, log, metrics })
            })
            .collect()
    })
}
