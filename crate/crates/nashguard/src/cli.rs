//! `nashguard run | trials | sweep | bench`.
//!
//! Settings resolve as scenario builder, then `--config` file, then flags.
//! Exit status is 0 on success, 2 for invalid arguments (with usage on
//! standard error) and 1 for runtime failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use nashguard_core::planner::{run_simulation, SimulationLog};
use nashguard_core::scenarios::{build, HypothesisPolicy, ScenarioConfig, ScenarioKind, Variant};

use crate::bench::run_bench;
use crate::config::{kind_label, parse_kind, parse_mode, parse_variant, ConfigFile};
use crate::metrics::{metrics_for, MetricsRecord, TrialSummary};
use crate::output::{
    format_summary_table, write_lambda, write_metrics, write_summary, write_text, write_trajectory, RunLabel,
};
use crate::plot::{distance_plot, lambda_bars};
use crate::trials::{
    hypotheses_label, parse_hypotheses, run_trial_runs, summarize, sweep_gamma, Comm, TrialSpec, HYPOTHESIS_SETS,
};
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "nashguard", version, about = "Fault-tolerant game-theoretic motion planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario; writes trajectory.csv, lambda.csv and metrics.csv.
    Run(Opts),
    /// Randomized trials per communication condition and hypothesis set.
    Trials(Opts),
    /// One run per update rate, with belief and distance plots.
    Sweep(Opts),
    /// Solver and likelihood-update timing and allocation report.
    Bench(Opts),
}

#[derive(Debug, Args)]
struct Opts {
    /// overtake | merge | intersection
    #[arg(long)]
    scenario: Option<String>,
    /// faulty | truthful | multi
    #[arg(long)]
    variant: Option<String>,
    /// Hypothesis set: Ic | I1,I2 | Ic,I1,I2
    #[arg(long)]
    hypotheses: Option<String>,
    /// faulty | correct
    #[arg(long)]
    comm: Option<String>,
    /// Update rate; a comma-separated list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Trials per condition (`trials`) or timed repetitions (`bench`).
    #[arg(long)]
    n: Option<usize>,
    /// Multiplicative control noise amplitude in [0, 1).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// argmax | weighted
    #[arg(long)]
    mode: Option<String>,
}

const DEFAULT_SWEEP: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(HarnessError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

struct Resolved {
    config: ScenarioConfig,
    file: ConfigFile,
    comm: Option<Comm>,
    hypotheses: Option<HypothesisPolicy>,
}

fn resolve(opts: &Opts, default_kind: ScenarioKind) -> Result<Resolved, HarnessError> {
    let file = match &opts.config {
        Some(p) => ConfigFile::load(p).map_err(|e| match e {
            HarnessError::Io { .. } | HarnessError::Config { .. } => HarnessError::usage(e.to_string()),
            other => other,
        })?,
        None => ConfigFile::default(),
    };
    let kind = match &opts.scenario {
        Some(s) => parse_kind(s)?,
        None => file.kind()?.unwrap_or(default_kind),
    };
    let variant = match &opts.variant {
        Some(s) => parse_variant(s)?,
        None => file.variant()?.unwrap_or(Variant::Faulty),
    };
    let mut config = build(kind, variant);
    file.apply(&mut config)?;
    let comm = opts.comm.as_deref().map(Comm::parse).transpose()?;
    let hypotheses = opts.hypotheses.as_deref().map(parse_hypotheses).transpose()?;
    if let Some(h) = hypotheses {
        config.hypothesis_policy = h;
    }
    if let Some(m) = &opts.mode {
        config.mode = parse_mode(m)?;
    }
    if let Some(n) = opts.noise {
        config.noise = n;
    }
    if let Some(s) = opts.seed {
        config.seed = s;
    }
    Ok(Resolved { config, file, comm, hypotheses })
}

fn single_gamma(opts: &Opts) -> Result<Option<f64>, HarnessError> {
    match opts.gamma.as_slice() {
        [] => Ok(None),
        [g] => Ok(Some(*g)),
        _ => Err(HarnessError::usage("this subcommand takes a single --gamma")),
    }
}

fn checked(config: ScenarioConfig) -> Result<ScenarioConfig, HarnessError> {
    config.validate().map_err(|e| HarnessError::usage(e.to_string()))?;
    Ok(config)
}

fn out_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(HarnessError::io(path))
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run(o) => cmd_run(&o),
        Command::Trials(o) => cmd_trials(&o),
        Command::Sweep(o) => cmd_sweep(&o),
        Command::Bench(o) => cmd_bench(&o),
    }
}

fn label(config: &ScenarioConfig, comm: Comm, run: usize) -> RunLabel {
    RunLabel {
        run,
        scenario: kind_label(config.kind).into(),
        comm,
        hypotheses: hypotheses_label(config.hypothesis_policy).into(),
        gamma: config.gamma,
        noise: config.noise,
        seed: config.seed,
    }
}

fn comm_of(config: &ScenarioConfig) -> Comm {
    if config.agents.iter().any(|a| a.is_faulty()) {
        Comm::Faulty
    } else {
        Comm::Correct
    }
}

fn metrics_line(m: &MetricsRecord) -> String {
    format!("d={:.4} risky={} crash={} J={:.4} acc_max={:.4}", m.d, m.risky, m.crash, m.j, m.acc_max)
}

fn write_run(dir: &Path, log: &SimulationLog) -> Result<(), HarnessError> {
    write_trajectory(&dir.join("trajectory.csv"), log)?;
    write_lambda(&dir.join("lambda.csv"), log)
}

fn cmd_run(o: &Opts) -> Result<(), HarnessError> {
    let mut r = resolve(o, ScenarioKind::Overtake)?;
    if let Some(g) = single_gamma(o)? {
        r.config.gamma = g;
    }
    let config = checked(match r.comm {
        Some(c) => c.apply(r.config),
        None => r.config,
    })?;
    out_dir(&o.out)?;
    let log = run_simulation(&config)?;
    let m = metrics_for(&config, &log)?;
    write_run(&o.out, &log)?;
    write_metrics(&o.out.join("metrics.csv"), &[(label(&config, comm_of(&config), 0), Ok(m))])?;
    println!("{} {}: {}", kind_label(config.kind), comm_of(&config), metrics_line(&m));
    Ok(())
}

fn cmd_trials(o: &Opts) -> Result<(), HarnessError> {
    let mut r = resolve(o, ScenarioKind::Merge)?;
    if let Some(g) = single_gamma(o)? {
        r.config.gamma = g;
    }
    let config = checked(r.config)?;
    let mut base = TrialSpec { noise: config.noise, seed: config.seed, ..TrialSpec::default() };
    r.file.apply_trials(&mut base)?;
    if let Some(n) = o.n {
        base.n = n;
    }
    if let Some(n) = o.noise {
        base.noise = n;
    }
    if let Some(s) = o.seed {
        base.seed = s;
    }
    let comms: Vec<Comm> = r.comm.map_or(Comm::ALL.to_vec(), |c| vec![c]);
    let sets: Vec<HypothesisPolicy> = r.hypotheses.map_or(HYPOTHESIS_SETS.to_vec(), |h| vec![h]);
    out_dir(&o.out)?;
    let mut rows = Vec::new();
    let mut summaries: Vec<TrialSummary> = Vec::new();
    for &comm in &comms {
        for &hypotheses in &sets {
            let spec = TrialSpec { comm, hypotheses, ..base.clone() };
            checked(comm.apply(config.clone()).with_policy(hypotheses))?;
            let runs = run_trial_runs(&config, &spec)?;
            for run in &runs {
                let mut l = label(&config.clone().with_policy(hypotheses), comm, rows.len());
                l.noise = spec.noise;
                l.seed = run.seed;
                rows.push((l, run.result.clone()));
            }
            summaries.push(summarize(&spec, &runs));
        }
    }
    write_metrics(&o.out.join("metrics.csv"), &rows)?;
    write_summary(&o.out.join("summary.csv"), &summaries)?;
    let table = format_summary_table(&summaries);
    write_text(&o.out.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_sweep(o: &Opts) -> Result<(), HarnessError> {
    let r = resolve(o, ScenarioKind::Overtake)?;
    let config = checked(match r.comm {
        Some(c) => c.apply(r.config),
        None => r.config,
    })?;
    let gammas = if o.gamma.is_empty() { DEFAULT_SWEEP.to_vec() } else { o.gamma.clone() };
    let points = sweep_gamma(&config, &gammas)?;
    out_dir(&o.out)?;
    let observer = config.ego;
    let target = config
        .agents
        .iter()
        .position(|a| a.is_faulty())
        .filter(|&t| t != observer)
        .unwrap_or(if observer == 0 { 1 } else { 0 });
    let mut rows = Vec::new();
    for (k, p) in points.iter().enumerate() {
        let dir = o.out.join(format!("gamma_{}", p.gamma));
        out_dir(&dir)?;
        write_run(&dir, &p.log)?;
        let name = |a: usize| config.agents.get(a).map_or(format!("v{}", a + 1), |s| s.name.clone());
        let title = format!("belief of {} about {} (gamma {})", name(observer), name(target), p.gamma);
        write_text(&dir.join("lambda.svg"), &lambda_bars(&p.log, observer, target, &title))?;
        let title = format!("normalized distances (gamma {})", p.gamma);
        write_text(&dir.join("distance.svg"), &distance_plot(&p.log, config.d_min(), &title))?;
        rows.push((label(&config.clone().with_gamma(p.gamma), comm_of(&config), k), Ok(p.metrics)));
        println!("gamma {}: {}", p.gamma, metrics_line(&p.metrics));
    }
    write_metrics(&o.out.join("metrics.csv"), &rows)
}

fn cmd_bench(o: &Opts) -> Result<(), HarnessError> {
    let reps = o.n.unwrap_or(5);
    if reps == 0 {
        return Err(HarnessError::usage("--n must be positive"));
    }
    let report = run_bench(reps, reps * 20)?;
    out_dir(&o.out)?;
    let mut csv = String::from("task,allocations,peak_bytes,counted\n");
    for (name, s) in [("SolveDynamicGame", &report.solve), ("UpdateLikelihood", &report.update)] {
        csv.push_str(&format!("{name},{},{},{}\n", s.allocations, s.peak_bytes, report.counting));
    }
    write_text(&o.out.join("bench.csv"), &csv)?;
    print!("{}", report.table());
    Ok(())
}
