//! Run time, allocation count and peak heap growth of one game solve and of
//! one likelihood update on the three-agent merge.
//!
//! Allocation figures need [`CountingAllocator`] installed as the global
//! allocator (the `nashguard` binary does this); otherwise they read zero.

use std::alloc::{GlobalAlloc, Layout, System};
use std::fmt::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::time::Instant;

use nashguard_core::dynamics::StateTrajectory;
use nashguard_core::game::{GameDefinition, NashSolution, NashSolver};
use nashguard_core::hypothesis::{score_predictions, update_belief, FilterSettings, LikelihoodVector};
use nashguard_core::planner::{build_planners, CommunicationChannel};
use nashguard_core::scenarios::{build, ScenarioKind, Variant};
use nashguard_core::SolveError;

use crate::HarnessError;

static SEEN: AtomicBool = AtomicBool::new(false);
static COUNT: AtomicU64 = AtomicU64::new(0);
static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

pub struct CountingAllocator;

impl CountingAllocator {
    fn grew(size: usize) {
        COUNT.fetch_add(1, Ordering::Relaxed);
        let live = LIVE.fetch_add(size, Ordering::Relaxed) + size;
        PEAK.fetch_max(live, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        SEEN.store(true, Ordering::Relaxed);
        let p = System.alloc(layout);
        if !p.is_null() {
            Self::grew(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
            Self::grew(new_size);
        }
        p
    }
}

/// Whether allocations are being counted in this process.
pub fn counting() -> bool {
    SEEN.load(Ordering::Relaxed)
}

/// Allocations and peak live-byte growth of `f`.
fn tracked<R>(f: impl FnOnce() -> R) -> (R, u64, usize) {
    let live = LIVE.load(Ordering::Relaxed);
    PEAK.store(live, Ordering::Relaxed);
    let count = COUNT.load(Ordering::Relaxed);
    let out = f();
    let allocs = COUNT.load(Ordering::Relaxed) - count;
    let peak = PEAK.load(Ordering::Relaxed).saturating_sub(live);
    (out, allocs, peak)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskStats {
    /// Median wall time per call (s).
    pub seconds: f64,
    pub allocations: u64,
    pub peak_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub solve: TaskStats,
    pub update: TaskStats,
    pub solve_iterations: usize,
    pub counting: bool,
}

impl BenchReport {
    pub fn ratio(&self) -> f64 {
        self.solve.seconds / self.update.seconds
    }

    /// Table with orders of magnitude, as printed by `nashguard bench`.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<18} {:>13} {:>10} {:>11}", "task", "run time (s)", "# alloc.", "space (MB)");
        for (name, s) in [("SolveDynamicGame", &self.solve), ("UpdateLikelihood", &self.update)] {
            let (allocs, mb) = if self.counting {
                (s.allocations.to_string(), format!("{:.4}", s.peak_bytes as f64 / 1e6))
            } else {
                ("n/a".into(), "n/a".into())
            };
            let _ = writeln!(out, "{name:<18} {:>13.2e} {allocs:>10} {mb:>11}", s.seconds);
        }
        let _ = writeln!(
            out,
            "solve/update time ratio: {:.0}x ({} Newton iterations per solve)",
            self.ratio(),
            self.solve_iterations
        );
        out
    }
}

/// The ego's first-episode perceived game of the faulty merge, its initial
/// state, and the versions of the game for each hypothesis about `v1`.
pub fn merge_instance(
) -> Result<(GameDefinition, nashguard_core::dynamics::JointState, Vec<GameDefinition>), HarnessError> {
    let cfg = build(ScenarioKind::Merge, Variant::Faulty);
    let planners = build_planners(&cfg)?;
    let channel = CommunicationChannel::collect(&planners);
    let game = planners[cfg.ego].perceived_game(channel.broadcasts())?;
    let hyp = cfg.hypothesis_set(0)?;
    let versions = hyp.iter().map(|c| game.with_cost(0, c.clone())).collect();
    Ok((game, cfg.initial_state(), versions))
}

fn solve(game: &GameDefinition, x0: &nashguard_core::dynamics::JointState) -> Result<NashSolution, HarnessError> {
    match NashSolver::default().solve(game, x0, None) {
        Ok(s) => Ok(s),
        Err(SolveError::MaxIterationsExceeded { best }) => Ok(*best),
        Err(e) => Err(HarnessError::usage(format!("benchmark solve failed: {e}"))),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Times `solve_reps` cold solves and `update_reps` likelihood updates
/// (disparity scoring of every hypothesis, the likelihood estimate and the
/// fusion; the hypothesis games are solved beforehand).
pub fn run_bench(solve_reps: usize, update_reps: usize) -> Result<BenchReport, HarnessError> {
    let (game, x0, versions) = merge_instance()?;
    let first = solve(&game, &x0)?;
    let (_, solve_allocs, solve_peak) = tracked(|| solve(&game, &x0));
    let mut times = Vec::with_capacity(solve_reps.max(1));
    for _ in 0..solve_reps.max(1) {
        let t = Instant::now();
        std::hint::black_box(solve(&game, &x0)?);
        times.push(t.elapsed().as_secs_f64());
    }
    let solve_stats = TaskStats { seconds: median(times), allocations: solve_allocs, peak_bytes: solve_peak };

    let predictions: Vec<Option<NashSolution>> = versions.iter().map(|g| solve(g, &x0).ok()).collect();
    let obs = StateTrajectory(first.trajectory.states()[..6].to_vec());
    let prior = LikelihoodVector::trusting(predictions.len());
    let filter = FilterSettings::default();
    let update = || -> Result<LikelihoodVector, HarnessError> {
        let scores = score_predictions(&obs, &predictions, &filter)?;
        Ok(update_belief(&prior, &scores, 0.6)?)
    };
    let (_, update_allocs, update_peak) = tracked(update);
    let batch = 100;
    let mut times = Vec::with_capacity(update_reps.max(1));
    for _ in 0..update_reps.max(1) {
        let t = Instant::now();
        for _ in 0..batch {
            std::hint::black_box(update()?);
        }
        times.push(t.elapsed().as_secs_f64() / batch as f64);
    }
    let update_stats = TaskStats { seconds: median(times), allocations: update_allocs, peak_bytes: update_peak };
    Ok(BenchReport {
        solve: solve_stats,
        update: update_stats,
        solve_iterations: first.iterations,
        counting: counting(),
    })
}
