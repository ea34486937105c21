use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nashguard::{metrics_for, run_trials, Comm, TrialSpec};
use nashguard_core::planner::run_simulation;
use nashguard_core::scenarios::{build, HypothesisPolicy, ScenarioKind, Variant};

fn nashguard(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nashguard")).args(args).arg("--out").arg(out).output().unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn run_writes_the_three_tables() {
    let dir = tempfile::tempdir().unwrap();
    let res = nashguard(&["run", "--scenario", "overtake", "--gamma", "0.6"], dir.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(header(&dir.path().join("trajectory.csv")), "t,agent,px,py,theta,v,omega,a");
    assert_eq!(header(&dir.path().join("lambda.csv")), "episode,observer,target,hypothesis,lambda");
    assert_eq!(
        header(&dir.path().join("metrics.csv")),
        "run,scenario,comm,hypotheses,gamma,noise,seed,status,d,risky,crash,J,acc_max"
    );
    let trajectory = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(trajectory.lines().last().unwrap().ends_with(",,"));
    assert!(String::from_utf8_lossy(&res.stdout).contains("crash=false"));
}

#[test]
fn bad_arguments_exit_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--frobnicate"][..],
        &["run", "--gamma", "2"],
        &["run", "--scenario", "roundabout"],
        &["sweep", "--gamma", "0.5,-1"],
        &["trials", "--n", "0"],
        &["trials", "--hypotheses", "I3"],
    ] {
        let res = nashguard(args, dir.path());
        assert_eq!(res.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&res.stderr).contains("Usage"), "{args:?}");
    }
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = nashguard(&["run", "--config", "/nonexistent/settings.toml"], dir.path());
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn config_file_and_flags_layer_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("settings.toml");
    fs::write(&cfg, "[scenario]\nkind = \"merge\"\n\n[planner]\nupdate_rate_gamma = 0.3\ntotal_steps = 10\n").unwrap();
    let out = dir.path().join("out");
    let res = nashguard(&["run", "--config", cfg.to_str().unwrap(), "--gamma", "0.7"], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut metrics = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let row = metrics.records().next().unwrap().unwrap();
    assert_eq!(&row[1], "merge");
    assert_eq!(&row[4], "0.7");
    let states = fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().count() - 1;
    assert_eq!(states, 11 * 3);
}

#[test]
fn single_noiseless_trial_is_the_plain_simulation() {
    let cfg = build(ScenarioKind::Overtake, Variant::Faulty);
    let spec =
        TrialSpec { n: 1, noise: 0.0, jitter_m: 0.0, hypotheses: HypothesisPolicy::Full, ..TrialSpec::default() };
    let summary = run_trials(&cfg, &spec).unwrap();
    let direct = metrics_for(&cfg, &run_simulation(&cfg).unwrap()).unwrap();
    assert_eq!(summary.records, vec![direct]);
    assert_eq!(summary.comm, Comm::Faulty);
}
