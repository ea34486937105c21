//! Experiment harness for `nashguard-core`: run metrics, randomized trials,
//! update-rate sweeps, CSV/SVG/TOML file formats, a solver benchmark and the
//! `nashguard` command line.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod output;
pub mod plot;
pub mod trials;

pub use error::HarnessError;
pub use metrics::{compute_metrics, metrics_for, MetricsRecord, TrialSummary};
pub use trials::{run_trials, sweep_gamma, Comm, SweepPoint, TrialSpec};
