//! CSV files and text tables.
//!
//! Every file has a header row, UTF-8 text and `\n` line endings. Floats are
//! written in Rust's shortest round-trip form, so identical runs produce
//! identical bytes.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use csv::{Terminator, Writer, WriterBuilder};
use nashguard_core::planner::SimulationLog;

use crate::metrics::{MetricsRecord, TrialSummary};
use crate::trials::{hypotheses_label, Comm};
use crate::HarnessError;

/// Shortest round-trip form, with an exponent for very small or large values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn writer(path: &Path) -> Result<Writer<File>, HarnessError> {
    let file = File::create(path).map_err(HarnessError::io(path))?;
    Ok(WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(file))
}

fn finish(mut w: Writer<File>, path: &Path) -> Result<(), HarnessError> {
    w.flush().map_err(HarnessError::io(path))
}

/// `t, agent, px, py, theta, v, omega, a`; `t` in seconds. The control
/// columns hold the control applied from that state on and are empty on the
/// final state.
pub fn write_trajectory(path: &Path, log: &SimulationLog) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["t", "agent", "px", "py", "theta", "v", "omega", "a"])?;
    for (k, x) in log.trajectory.states().iter().enumerate() {
        let t = num((k as f64 * log.dt * 1e9).round() / 1e9);
        for (i, s) in x.0.iter().enumerate() {
            let (omega, a) = match log.controls.get(k) {
                Some(u) => (num(u.0[i].omega), num(u.0[i].a)),
                None => (String::new(), String::new()),
            };
            w.write_record([t.clone(), i.to_string(), num(s.px), num(s.py), num(s.theta), num(s.v), omega, a])?;
        }
    }
    finish(w, path)
}

/// `episode, observer, target, hypothesis, lambda`. Episode 0 is the prior.
pub fn write_lambda(path: &Path, log: &SimulationLog) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["episode", "observer", "target", "hypothesis", "lambda"])?;
    for b in &log.beliefs {
        for (h, l) in b.lambdas.iter().enumerate() {
            w.write_record([
                b.episode.to_string(),
                b.observer.to_string(),
                b.target.to_string(),
                h.to_string(),
                num(*l),
            ])?;
        }
    }
    finish(w, path)
}

/// Identification of one run in `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLabel {
    pub run: usize,
    pub scenario: String,
    pub comm: Comm,
    pub hypotheses: String,
    pub gamma: f64,
    pub noise: f64,
    pub seed: u64,
}

pub const METRICS_HEADER: [&str; 13] = [
    "run",
    "scenario",
    "comm",
    "hypotheses",
    "gamma",
    "noise",
    "seed",
    "status",
    "d",
    "risky",
    "crash",
    "J",
    "acc_max",
];

/// One row per run; failed runs keep their label with status `failed` and
/// empty metric columns.
pub fn write_metrics(path: &Path, rows: &[(RunLabel, Result<MetricsRecord, String>)]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(METRICS_HEADER)?;
    for (l, m) in rows {
        let mut rec = vec![
            l.run.to_string(),
            l.scenario.clone(),
            l.comm.to_string(),
            l.hypotheses.clone(),
            num(l.gamma),
            num(l.noise),
            l.seed.to_string(),
        ];
        match m {
            Ok(m) => {
                rec.extend(["ok".into(), num(m.d), m.risky.to_string(), m.crash.to_string(), num(m.j), num(m.acc_max)])
            }
            Err(_) => {
                rec.extend(["failed".into(), String::new(), String::new(), String::new(), String::new(), String::new()])
            }
        }
        w.write_record(&rec)?;
    }
    finish(w, path)
}

pub fn write_summary(path: &Path, rows: &[TrialSummary]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record([
        "comm",
        "hypotheses",
        "n",
        "failures",
        "d_mean",
        "d_std",
        "risky_rate",
        "crash_rate",
        "J_mean",
        "acc_max_mean",
    ])?;
    for s in rows {
        w.write_record([
            s.comm.to_string(),
            hypotheses_label(s.hypotheses).to_string(),
            s.n.to_string(),
            s.failures.to_string(),
            num(s.d_mean),
            num(s.d_std),
            num(s.risky_rate),
            num(s.crash_rate),
            num(s.j_mean),
            num(s.acc_max_mean),
        ])?;
    }
    finish(w, path)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    let mut f = File::create(path).map_err(HarnessError::io(path))?;
    f.write_all(text.as_bytes()).map_err(HarnessError::io(path))
}

/// Fixed-width table grouped by communication condition, with a pooled
/// `total` block when both conditions are present.
pub fn format_summary_table(rows: &[TrialSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<10} {:>4} {:>5} {:>13} {:>7} {:>7} {:>10} {:>8}",
        "comm", "hypotheses", "n", "fail", "d", "risky", "crash", "J", "acc_max"
    );
    let line = |out: &mut String, label: &str, s: &TrialSummary| {
        let _ = writeln!(
            out,
            "{:<8} {:<10} {:>4} {:>5} {:>6.2} ± {:<4.2} {:>6.1}% {:>6.1}% {:>10.2} {:>8.2}",
            label,
            hypotheses_label(s.hypotheses),
            s.n,
            s.failures,
            s.d_mean,
            s.d_std,
            100.0 * s.risky_rate,
            100.0 * s.crash_rate,
            s.j_mean,
            s.acc_max_mean
        );
    };
    for s in rows {
        line(&mut out, s.comm.label(), s);
    }
    let has_both = Comm::ALL.iter().all(|c| rows.iter().any(|s| s.comm == *c));
    if has_both {
        let mut sets = Vec::new();
        for s in rows {
            if !sets.contains(&s.hypotheses) {
                sets.push(s.hypotheses);
            }
        }
        for h in sets {
            let parts: Vec<&TrialSummary> = rows.iter().filter(|s| s.hypotheses == h).collect();
            line(&mut out, "total", &TrialSummary::pooled(Comm::Faulty, &parts));
        }
    }
    out
}
