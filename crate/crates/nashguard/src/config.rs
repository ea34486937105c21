//! TOML run configuration.
//!
//! Every key is optional; a file only overrides what it names. Keys carry
//! their unit in the name. The scenario kind and variant pick the builder;
//! the remaining sections adjust its settings.
//!
//! ```toml
//! [scenario]
//! kind = "merge"              # overtake | merge | intersection
//! variant = "faulty"          # faulty | truthful | multi
//! ego_agent = 1               # index of the agent the metrics report
//!
//! [planner]
//! horizon_states = 20
//! executed_steps = 5
//! time_step_s = 0.1
//! total_steps = 80
//! update_rate_gamma = 0.6
//! perception_mode = "argmax"  # argmax | weighted
//! hypotheses = "Ic,I1,I2"     # Ic | I1,I2 | Ic,I1,I2
//! target_scope = false
//!
//! [geometry]
//! vehicle_radius_m = 1.0
//! pair_clearance_m = 2.8
//! goal_radius_m = 1.0
//!
//! [trials]
//! runs = 20
//! comm = "faulty"             # faulty | correct
//! control_noise_fraction = 0.2
//! seed = 0
//! start_jitter_m = 5.0
//!
//! [agents.v1]                 # start overrides, by agent name
//! px_m = -6.0
//! py_m = 1.85
//! heading_rad = 0.0
//! speed_mps = 8.0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use nashguard_core::hypothesis::PerceptionMode;
use nashguard_core::scenarios::{ScenarioConfig, ScenarioKind, Variant};
use serde::{Deserialize, Serialize};

use crate::trials::{hypotheses_label, parse_hypotheses, Comm, TrialSpec};
use crate::HarnessError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<PlannerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<TrialsSection>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub agents: BTreeMap<String, AgentStart>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego_agent: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_rate_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_scope: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_radius_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_clearance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_radius_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_noise_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_jitter_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentStart {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub px_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub py_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_mps: Option<f64>,
}

pub fn parse_kind(s: &str) -> Result<ScenarioKind, HarnessError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "overtake" => Ok(ScenarioKind::Overtake),
        "merge" => Ok(ScenarioKind::Merge),
        "intersection" => Ok(ScenarioKind::Intersection),
        other => Err(HarnessError::usage(format!("unknown scenario `{other}` (overtake|merge|intersection)"))),
    }
}

pub fn kind_label(k: ScenarioKind) -> &'static str {
    match k {
        ScenarioKind::Overtake => "overtake",
        ScenarioKind::Merge => "merge",
        ScenarioKind::Intersection => "intersection",
    }
}

pub fn parse_variant(s: &str) -> Result<Variant, HarnessError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "faulty" => Ok(Variant::Faulty),
        "truthful" | "correct" => Ok(Variant::Truthful),
        "multi" | "multi-hypothesis" => Ok(Variant::MultiHypothesis),
        other => Err(HarnessError::usage(format!("unknown variant `{other}` (faulty|truthful|multi)"))),
    }
}

pub fn variant_label(v: Variant) -> &'static str {
    match v {
        Variant::Faulty => "faulty",
        Variant::Truthful => "truthful",
        Variant::MultiHypothesis => "multi",
    }
}

pub fn parse_mode(s: &str) -> Result<PerceptionMode, HarnessError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "argmax" => Ok(PerceptionMode::Argmax),
        "weighted" => Ok(PerceptionMode::Weighted),
        other => Err(HarnessError::usage(format!("unknown perception mode `{other}` (argmax|weighted)"))),
    }
}

pub fn mode_label(m: PerceptionMode) -> &'static str {
    match m {
        PerceptionMode::Argmax => "argmax",
        PerceptionMode::Weighted => "weighted",
    }
}

impl ConfigFile {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config { path: path.into(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config sections serialize")
    }

    pub fn kind(&self) -> Result<Option<ScenarioKind>, HarnessError> {
        self.scenario.as_ref().and_then(|s| s.kind.as_deref()).map(parse_kind).transpose()
    }

    pub fn variant(&self) -> Result<Option<Variant>, HarnessError> {
        self.scenario.as_ref().and_then(|s| s.variant.as_deref()).map(parse_variant).transpose()
    }

    /// Overrides the scenario settings this file names.
    pub fn apply(&self, cfg: &mut ScenarioConfig) -> Result<(), HarnessError> {
        if let Some(ego) = self.scenario.as_ref().and_then(|s| s.ego_agent) {
            cfg.ego = ego;
        }
        if let Some(p) = &self.planner {
            set(&mut cfg.horizon, p.horizon_states);
            set(&mut cfg.executed_steps, p.executed_steps);
            set(&mut cfg.dt, p.time_step_s);
            set(&mut cfg.total_steps, p.total_steps);
            set(&mut cfg.gamma, p.update_rate_gamma);
            set(&mut cfg.target_scope, p.target_scope);
            if let Some(m) = &p.perception_mode {
                cfg.mode = parse_mode(m)?;
            }
            if let Some(h) = &p.hypotheses {
                cfg.hypothesis_policy = parse_hypotheses(h)?;
            }
        }
        if let Some(g) = &self.geometry {
            set(&mut cfg.vehicle_radius, g.vehicle_radius_m);
            set(&mut cfg.pair_clearance, g.pair_clearance_m);
            set(&mut cfg.goal_radius, g.goal_radius_m);
        }
        if let Some(t) = &self.trials {
            set(&mut cfg.noise, t.control_noise_fraction);
            set(&mut cfg.seed, t.seed);
        }
        for (name, start) in &self.agents {
            let agent = cfg
                .agents
                .iter_mut()
                .find(|a| &a.name == name)
                .ok_or_else(|| HarnessError::usage(format!("scenario has no agent named `{name}`")))?;
            set(&mut agent.initial.px, start.px_m);
            set(&mut agent.initial.py, start.py_m);
            set(&mut agent.initial.theta, start.heading_rad);
            set(&mut agent.initial.v, start.speed_mps);
        }
        Ok(())
    }

    /// Overrides the trial settings this file names.
    pub fn apply_trials(&self, spec: &mut TrialSpec) -> Result<(), HarnessError> {
        if let Some(h) = self.planner.as_ref().and_then(|p| p.hypotheses.as_deref()) {
            spec.hypotheses = parse_hypotheses(h)?;
        }
        if let Some(t) = &self.trials {
            set(&mut spec.n, t.runs);
            set(&mut spec.noise, t.control_noise_fraction);
            set(&mut spec.seed, t.seed);
            set(&mut spec.jitter_m, t.start_jitter_m);
            if let Some(c) = &t.comm {
                spec.comm = Comm::parse(c)?;
            }
        }
        Ok(())
    }

    /// A file naming every setting of `cfg` and `spec`.
    pub fn describe(cfg: &ScenarioConfig, spec: &TrialSpec) -> Self {
        Self {
            scenario: Some(ScenarioSection {
                kind: Some(kind_label(cfg.kind).into()),
                variant: Some(variant_label(cfg.variant).into()),
                ego_agent: Some(cfg.ego),
            }),
            planner: Some(PlannerSection {
                horizon_states: Some(cfg.horizon),
                executed_steps: Some(cfg.executed_steps),
                time_step_s: Some(cfg.dt),
                total_steps: Some(cfg.total_steps),
                update_rate_gamma: Some(cfg.gamma),
                perception_mode: Some(mode_label(cfg.mode).into()),
                hypotheses: Some(hypotheses_label(cfg.hypothesis_policy).into()),
                target_scope: Some(cfg.target_scope),
            }),
            geometry: Some(GeometrySection {
                vehicle_radius_m: Some(cfg.vehicle_radius),
                pair_clearance_m: Some(cfg.pair_clearance),
                goal_radius_m: Some(cfg.goal_radius),
            }),
            trials: Some(TrialsSection {
                runs: Some(spec.n),
                comm: Some(spec.comm.label().into()),
                control_noise_fraction: Some(cfg.noise),
                seed: Some(cfg.seed),
                start_jitter_m: Some(spec.jitter_m),
            }),
            agents: cfg
                .agents
                .iter()
                .map(|a| {
                    let s = a.initial;
                    (
                        a.name.clone(),
                        AgentStart {
                            px_m: Some(s.px),
                            py_m: Some(s.py),
                            heading_rad: Some(s.theta),
                            speed_mps: Some(s.v),
                        },
                    )
                })
                .collect(),
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nashguard_core::scenarios::{build, HypothesisPolicy};

    #[test]
    fn full_description_round_trips() {
        for kind in [ScenarioKind::Overtake, ScenarioKind::Merge, ScenarioKind::Intersection] {
            let mut cfg = build(kind, Variant::Faulty);
            cfg.gamma = 0.35;
            cfg.noise = 0.15;
            cfg.seed = 42;
            cfg.mode = PerceptionMode::Weighted;
            cfg.hypothesis_policy = HypothesisPolicy::AlternativesOnly;
            cfg.agents[0].initial.px += 1.25;
            let spec = TrialSpec {
                n: 7,
                comm: Comm::Correct,
                noise: 0.15,
                seed: 42,
                jitter_m: 2.5,
                hypotheses: HypothesisPolicy::AlternativesOnly,
            };
            let file = ConfigFile::describe(&cfg, &spec);
            let text = file.to_toml_string();
            let back = ConfigFile::from_toml_str(&text, Path::new("mem")).unwrap();
            assert_eq!(back, file);

            let mut rebuilt = build(back.kind().unwrap().unwrap(), back.variant().unwrap().unwrap());
            back.apply(&mut rebuilt).unwrap();
            assert_eq!(rebuilt, cfg);
            let mut spec_back = TrialSpec::default();
            back.apply_trials(&mut spec_back).unwrap();
            assert_eq!(spec_back, spec);
        }
    }

    #[test]
    fn partial_file_overrides_only_named_keys() {
        let text = "[planner]\nupdate_rate_gamma = 0.9\n\n[agents.v2]\nspeed_mps = 3.0\n";
        let file = ConfigFile::from_toml_str(text, Path::new("mem")).unwrap();
        let base = build(ScenarioKind::Overtake, Variant::Faulty);
        let mut cfg = base.clone();
        file.apply(&mut cfg).unwrap();
        assert_eq!(cfg.gamma, 0.9);
        assert_eq!(cfg.agents[1].initial.v, 3.0);
        cfg.gamma = base.gamma;
        cfg.agents[1].initial.v = base.agents[1].initial.v;
        assert_eq!(cfg, base);
    }

    #[test]
    fn rejects_unknown_keys_and_names() {
        assert!(ConfigFile::from_toml_str("[planner]\ngamma = 0.5\n", Path::new("mem")).is_err());
        let file = ConfigFile::from_toml_str("[agents.v9]\npx_m = 1.0\n", Path::new("mem")).unwrap();
        assert!(file.apply(&mut build(ScenarioKind::Merge, Variant::Faulty)).is_err());
        let file = ConfigFile::from_toml_str("[scenario]\nkind = \"roundabout\"\n", Path::new("mem")).unwrap();
        assert!(file.kind().is_err());
    }
}
