//! Intention hypotheses: disparity scoring, closed-form likelihood estimates
//! and rate-limited fusion.
//!
//! The transition model between hypotheses is the identity, so the predict
//! step leaves the belief unchanged and only the update is implemented.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{JointState, StateTrajectory};
use crate::error::{Error, SolveError};
use crate::game::{GameDefinition, NashSolution, NashSolver, QuadraticCost};

/// Denominator guard for relative errors.
pub const DEFAULT_EPS: f64 = 1e-6;
/// Added to every disparity so scores stay strictly positive.
pub const DEFAULT_OFFSET: f64 = 1e-9;

const SIMPLEX_TOL: f64 = 1e-12;

/// Belief over the `ξ + 1` hypotheses of one agent. Index 0 is the
/// communicated hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodVector(Vec<f64>);

impl LikelihoodVector {
    pub fn new(lambdas: Vec<f64>) -> Result<Self, Error> {
        if lambdas.is_empty() {
            return Err(Error::invalid("empty likelihood vector"));
        }
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::invalid("likelihoods must be finite and nonnegative"));
        }
        let sum: f64 = lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("likelihoods must sum to one"));
        }
        Ok(Self(lambdas))
    }

    /// Full trust in the communicated hypothesis.
    pub fn trusting(len: usize) -> Self {
        let mut v = vec![0.0; len.max(1)];
        v[0] = 1.0;
        Self(v)
    }

    pub fn uniform(len: usize) -> Self {
        let len = len.max(1);
        Self(vec![1.0 / len as f64; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &l) in self.0.iter().enumerate() {
            if l > self.0[best] {
                best = k;
            }
        }
        best
    }

    fn renormalized(mut v: Vec<f64>) -> Self {
        v.iter_mut().for_each(|l| *l = l.max(0.0));
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            v.iter_mut().for_each(|l| *l /= sum);
        }
        Self(v)
    }
}

/// The costs agent `j` might be optimizing: what it communicated plus `ξ`
/// alternatives.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    pub communicated: QuadraticCost,
    pub alternatives: Vec<QuadraticCost>,
}

impl HypothesisSet {
    pub fn new(communicated: QuadraticCost, alternatives: Vec<QuadraticCost>) -> Result<Self, Error> {
        for c in &alternatives {
            Error::check_len(communicated.state_dim(), c.state_dim())?;
        }
        Ok(Self { communicated, alternatives })
    }

    /// `ξ + 1`
    pub fn len(&self) -> usize {
        self.alternatives.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, index: usize) -> Option<&QuadraticCost> {
        match index {
            0 => Some(&self.communicated),
            k => self.alternatives.get(k - 1),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &QuadraticCost> {
        core::iter::once(&self.communicated).chain(&self.alternatives)
    }
}

/// One disparity per hypothesis, with the hypotheses whose game could not be
/// solved flagged (their score is a finite surrogate).
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityScores {
    pub values: Vec<f64>,
    pub failed: Vec<bool>,
}

impl DisparityScores {
    pub fn new(values: Vec<f64>) -> Self {
        let failed = vec![false; values.len()];
        Self { values, failed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerceptionMode {
    #[default]
    Argmax,
    Weighted,
}

/// Which state entries enter the disparity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DisparityScope {
    #[default]
    Joint,
    /// Only the sub-state of this agent.
    Agent(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSettings {
    pub eps: f64,
    pub offset: f64,
    pub scope: DisparityScope,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self { eps: DEFAULT_EPS, offset: DEFAULT_OFFSET, scope: DisparityScope::Joint }
    }
}

/// Summed elementwise relative L1 error of `hyp` against `obs`, plus `offset`.
///
/// Denominators are guarded as `sign(x̂)·max(|x̂|, eps)` with zero counted as
/// positive.
pub fn disparity_score(hyp: &StateTrajectory, obs: &StateTrajectory, eps: f64, offset: f64) -> Result<f64, Error> {
    disparity_score_scoped(hyp, obs, eps, offset, DisparityScope::Joint)
}

pub fn disparity_score_scoped(
    hyp: &StateTrajectory,
    obs: &StateTrajectory,
    eps: f64,
    offset: f64,
    scope: DisparityScope,
) -> Result<f64, Error> {
    Error::check_len(obs.len(), hyp.len())?;
    if !(eps > 0.0 && offset > 0.0) {
        return Err(Error::invalid("eps and offset must be positive"));
    }
    let mut total = 0.0;
    for (h, o) in hyp.states().iter().zip(obs.states()) {
        Error::check_len(o.n_agents(), h.n_agents())?;
        let agents = match scope {
            DisparityScope::Joint => 0..o.n_agents(),
            DisparityScope::Agent(j) if j < o.n_agents() => j..j + 1,
            DisparityScope::Agent(j) => return Err(Error::invalid(alloc::format!("no agent {j} to score"))),
        };
        for k in agents {
            for (xh, xo) in h.0[k].as_array().iter().zip(o.0[k].as_array()) {
                let den = if xo < 0.0 { -(-xo).max(eps) } else { xo.max(eps) };
                total += ((xh - xo) / den).abs();
            }
        }
    }
    Ok(total + offset)
}

/// Likelihood estimate inversely proportional to the disparities, from the
/// linear system
///
/// ```text
/// λ₀ + λ₁ + … + λ_ξ = 1
/// λ₀ − (d_I/d₀) λ_I = 0,   I = 1 … ξ
/// ```
pub fn solve_likelihoods(d: &DisparityScores) -> Result<LikelihoodVector, Error> {
    let d = &d.values;
    if d.is_empty() {
        return Err(Error::invalid("no disparities"));
    }
    if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("disparities must be positive and finite"));
    }
    let n = d.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    b[0] = 1.0;
    for k in 0..n {
        a[(0, k)] = 1.0;
    }
    for k in 1..n {
        a[(k, 0)] = 1.0;
        a[(k, k)] = -d[k] / d[0];
    }
    let lambda = a.lu().solve(&b).ok_or_else(|| Error::invalid("singular likelihood system"))?;
    Ok(LikelihoodVector::renormalized(lambda.iter().copied().collect()))
}

/// `(1 − γ)·prev + γ·est`
pub fn fuse_likelihoods(
    prev: &LikelihoodVector,
    est: &LikelihoodVector,
    gamma: f64,
) -> Result<LikelihoodVector, Error> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("update rate must lie in [0, 1]"));
    }
    Error::check_len(prev.len(), est.len())?;
    let v = prev.0.iter().zip(&est.0).map(|(p, e)| (1.0 - gamma) * p + gamma * e).collect();
    Ok(LikelihoodVector::renormalized(v))
}

/// Cost agent `j` is perceived to optimize under belief `lambda`.
pub fn form_perceived_cost(
    lambda: &LikelihoodVector,
    hyp: &HypothesisSet,
    mode: PerceptionMode,
) -> Result<QuadraticCost, Error> {
    Error::check_len(hyp.len(), lambda.len())?;
    match mode {
        PerceptionMode::Argmax => Ok(hyp.get(lambda.argmax()).expect("length checked").clone()),
        PerceptionMode::Weighted => {
            let costs: Vec<&QuadraticCost> = hyp.iter().collect();
            QuadraticCost::weighted_sum(lambda.as_slice(), &costs)
        }
    }
}

/// Result of scoring every game version against one observation window.
#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub scores: DisparityScores,
    /// Solution of each version, `None` where the solve failed.
    pub solutions: Vec<Option<NashSolution>>,
}

/// Solves each game version from `x_start`, takes the first `s` steps of its
/// equilibrium trajectory and scores it against `obs` (`s + 1` states).
///
/// Failed versions get the surrogate score `1e3 ×` the largest finite score
/// (or `1` if none succeeded) and are flagged.
pub fn measurement_update(
    obs: &StateTrajectory,
    x_start: &JointState,
    versions: &[GameDefinition],
    s: usize,
    settings: &FilterSettings,
    solver: &NashSolver,
    warm: &[Option<&NashSolution>],
) -> Result<MeasurementOutcome, Error> {
    Error::check_len(s + 1, obs.len())?;
    let mut solutions = Vec::with_capacity(versions.len());
    for (k, game) in versions.iter().enumerate() {
        if s >= game.horizon() {
            return Err(Error::invalid("observation window longer than the game horizon"));
        }
        let w = warm.get(k).copied().flatten();
        match solver.solve(game, x_start, w) {
            Ok(sol) => solutions.push(Some(sol)),
            Err(SolveError::Input(e)) => return Err(e),
            Err(_) => solutions.push(None),
        }
    }
    let scores = score_predictions(obs, &solutions, settings)?;
    Ok(MeasurementOutcome { scores, solutions })
}

/// Disparity of each predicted equilibrium (its first `obs.len()` states)
/// against `obs`, with surrogate scores for missing predictions.
pub fn score_predictions(
    obs: &StateTrajectory,
    predictions: &[Option<NashSolution>],
    settings: &FilterSettings,
) -> Result<DisparityScores, Error> {
    let mut values = Vec::with_capacity(predictions.len());
    let mut failed = Vec::with_capacity(predictions.len());
    for p in predictions {
        match p {
            Some(sol) if sol.trajectory.len() >= obs.len() => {
                let hyp = sol.trajectory.window(0, obs.len());
                values.push(disparity_score_scoped(&hyp, obs, settings.eps, settings.offset, settings.scope)?);
                failed.push(false);
            }
            Some(_) => return Err(Error::invalid("prediction shorter than the observation window")),
            None => {
                values.push(f64::NAN);
                failed.push(true);
            }
        }
    }
    let worst = values.iter().filter(|v| v.is_finite()).fold(f64::NAN, |m: f64, &v| m.max(v));
    let surrogate = if worst.is_finite() { worst * 1e3 } else { 1.0 };
    for v in values.iter_mut().filter(|v| !v.is_finite()) {
        *v = surrogate;
    }
    Ok(DisparityScores { values, failed })
}

/// Full filter step for one observed agent: estimate from disparities, then
/// fuse with the previous belief at rate `gamma`.
pub fn update_belief(prev: &LikelihoodVector, scores: &DisparityScores, gamma: f64) -> Result<LikelihoodVector, Error> {
    let est = solve_likelihoods(scores)?;
    fuse_likelihoods(prev, &est, gamma)
}
