//! Scenario configuration: TOML schema, validation, and the built-in
//! scenario registry.

use rh_core::dynamics::EgoState;
use rh_core::planner::PlannerConfig;
use rh_core::rulebank::RuleParams;
use rh_core::world::{AgentState, Lane, LaneLine, MapModel, NonEgoTrack, StopZone, WorldScene};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {name:?}; registered scenarios: {known:?}")]
    Unknown { name: String, known: Vec<String> },
    #[error("failed to parse scenario config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario {name:?}: {detail}")]
    Invalid { name: String, detail: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyKind {
    Road,
    Intersection,
}

/// Initial pose of the ego vehicle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EgoConfig {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub psi: f64,
    pub v: f64,
}

/// A scripted non-ego vehicle moving at constant velocity along its heading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    pub name: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
    #[serde(default)]
    pub speed: f64,
    pub half_extents: [f64; 2],
}

/// One complete scenario: map, agents, ego start, hierarchy choice, and the
/// set of rules the scenario narrative permits to be violated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub kind: HierarchyKind,
    /// Planning cycles to simulate.
    pub cycles: usize,
    pub ego: EgoConfig,
    #[serde(default)]
    pub rules: RuleParams,
    #[serde(default)]
    pub planner: PlannerConfig,
    pub lane_lines: Vec<LaneLine>,
    pub lanes: Vec<Lane>,
    #[serde(default)]
    pub stop_zones: Vec<StopZone>,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub allowed_violations: Vec<String>,
    /// Rotate keep-out rectangles with the agent body frame when false.
    #[serde(default)]
    pub keepout_axis_aligned: bool,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |detail: String| ScenarioError::Invalid {
            name: self.name.clone(),
            detail,
        };
        if self.cycles == 0 {
            return Err(fail("cycles must be positive".into()));
        }
        if self.agents.is_empty() {
            return Err(fail("at least one non-ego agent is required".into()));
        }
        if self.kind == HierarchyKind::Intersection && self.stop_zones.is_empty() {
            return Err(fail("intersection scenarios need a stop zone".into()));
        }
        let known = rule_names(&self.kind);
        for v in &self.allowed_violations {
            if !known.contains(&v.as_str()) {
                return Err(fail(format!(
                    "allowed violation {v:?} is not a rule of this hierarchy ({known:?})"
                )));
            }
        }
        Ok(())
    }

    pub fn initial_ego(&self) -> EgoState<f64> {
        EgoState::new(self.ego.x, self.ego.y, self.ego.psi, self.ego.v)
    }

    /// Builds the world scene with non-ego tracks scripted for `steps`
    /// simulation steps plus the planning horizon.
    pub fn world(&self, total_steps: usize) -> WorldScene {
        let dt = self.planner.dt;
        let non_ego = self
            .agents
            .iter()
            .map(|a| NonEgoTrack {
                states: (0..=total_steps)
                    .map(|k| {
                        let t = k as f64 * dt;
                        AgentState {
                            position: [
                                a.x + a.speed * a.heading.cos() * t,
                                a.y + a.speed * a.heading.sin() * t,
                            ],
                            heading: a.heading,
                            speed: a.speed,
                        }
                    })
                    .collect(),
                half_extents: a.half_extents,
            })
            .collect();
        WorldScene {
            map: MapModel {
                lane_lines: self.lane_lines.clone(),
                lanes: self.lanes.clone(),
                stop_zones: self.stop_zones.clone(),
            },
            non_ego,
            dt,
            keepout_axis_aligned: self.keepout_axis_aligned,
        }
    }
}

/// Rule names of each hierarchy, in priority order.
pub fn rule_names(kind: &HierarchyKind) -> Vec<&'static str> {
    match kind {
        HierarchyKind::Road => vec![
            "no-collision",
            "solid-line",
            "dashed-line",
            "orientation",
            "min-speed",
            "max-speed",
        ],
        HierarchyKind::Intersection => vec![
            "no-collision",
            "solid-line",
            "dashed-line",
            "stop-sign",
            "orientation",
            "min-speed",
            "max-speed",
        ],
    }
}

const BUILTIN: &[(&str, &str)] = &[
    (
        "overtake-from-lane",
        include_str!("../scenarios/overtake_from_lane.toml"),
    ),
    (
        "overtake-from-shoulder",
        include_str!("../scenarios/overtake_from_shoulder.toml"),
    ),
    (
        "stop-instead-of-overtake",
        include_str!("../scenarios/stop_instead_of_overtake.toml"),
    ),
    (
        "double-parked",
        include_str!("../scenarios/double_parked.toml"),
    ),
    (
        "intersection-wait",
        include_str!("../scenarios/intersection_wait.toml"),
    ),
    ("intersection-go", include_str!("../scenarios/intersection_go.toml")),
];

pub fn scenario_names() -> Vec<String> {
    BUILTIN.iter().map(|(n, _)| n.to_string()).collect()
}

pub fn load_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    for (n, text) in BUILTIN {
        if *n == name {
            let s = Scenario::parse(text)?;
            debug_assert_eq!(s.name, *n);
            return Ok(s);
        }
    }
    Err(ScenarioError::Unknown {
        name: name.to_string(),
        known: scenario_names(),
    })
}
