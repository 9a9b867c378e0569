//! Concrete rule hierarchies for road navigation (6 rules) and intersection
//! negotiation (7 rules, adding a stop-sign dwell rule at priority 4).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{HierarchyError, Rule, RuleHierarchy};
use crate::stl::{RulePredicate, StlFormula};
use crate::world::{LineKind, WorldScene};

#[derive(Debug, Error)]
pub enum RulebankError {
    #[error("scene has no {0} lane line")]
    MissingLaneLine(&'static str),
    #[error("scene has no lanes")]
    MissingLanes,
    #[error("scene has no stop zones")]
    MissingStopZones,
    #[error("scene has no non-ego agents")]
    MissingNonEgo,
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// Tunable rule thresholds and per-rule robustness scales.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleParams {
    pub a: f64,
    pub c: f64,
    /// Orientation tolerance at the end of the horizon (rad).
    pub theta_tol: f64,
    /// Speed below which the vehicle counts as stopped (m/s).
    pub v_stop: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub scale_collision: f64,
    pub scale_lane_line: f64,
    pub scale_orientation: f64,
    pub scale_speed: f64,
    pub scale_stop: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        Self {
            a: 2.01,
            c: 30.0,
            theta_tol: 0.1,
            v_stop: 0.5,
            v_min: 2.0,
            v_max: 15.0,
            scale_collision: 2.0,
            scale_lane_line: 1.0,
            scale_orientation: 0.1,
            scale_speed: 2.0,
            scale_stop: 1.0,
        }
    }
}

fn speed_at_least(v_min: f64) -> RulePredicate {
    RulePredicate::Linear {
        wx: 0.0,
        wy: 0.0,
        wpsi: 0.0,
        wv: 1.0,
        bias: -v_min,
    }
}

fn speed_at_most(v_max: f64) -> RulePredicate {
    RulePredicate::Linear {
        wx: 0.0,
        wy: 0.0,
        wpsi: 0.0,
        wv: -1.0,
        bias: v_max,
    }
}

fn constant(bias: f64) -> RulePredicate {
    RulePredicate::Linear {
        wx: 0.0,
        wy: 0.0,
        wpsi: 0.0,
        wv: 0.0,
        bias,
    }
}

fn check_road_scene(w: &WorldScene) -> Result<(), RulebankError> {
    if w.map.lanes.is_empty() {
        return Err(RulebankError::MissingLanes);
    }
    if !w.map.lane_lines.iter().any(|l| l.kind == LineKind::Solid) {
        return Err(RulebankError::MissingLaneLine("solid"));
    }
    if !w.map.lane_lines.iter().any(|l| l.kind == LineKind::Dashed) {
        return Err(RulebankError::MissingLaneLine("dashed"));
    }
    if w.non_ego.is_empty() {
        return Err(RulebankError::MissingNonEgo);
    }
    Ok(())
}

fn road_rules(params: &RuleParams, horizon: usize) -> Vec<Rule> {
    vec![
        Rule {
            name: "no-collision".into(),
            formula: StlFormula::always(
                0,
                horizon,
                StlFormula::predicate("keep-out", RulePredicate::CollisionMargin),
            ),
            scale: params.scale_collision,
        },
        Rule {
            name: "solid-line".into(),
            formula: StlFormula::always(
                0,
                horizon,
                StlFormula::predicate(
                    "solid-offset",
                    RulePredicate::LaneLineOffset {
                        kind: LineKind::Solid,
                    },
                ),
            ),
            scale: params.scale_lane_line,
        },
        Rule {
            name: "dashed-line".into(),
            formula: StlFormula::always(
                0,
                horizon,
                StlFormula::predicate(
                    "dashed-offset",
                    RulePredicate::LaneLineOffset {
                        kind: LineKind::Dashed,
                    },
                ),
            ),
            scale: params.scale_lane_line,
        },
        Rule {
            name: "orientation".into(),
            // Evaluated at the final step of the horizon only.
            formula: StlFormula::always(
                horizon,
                horizon,
                StlFormula::predicate(
                    "lane-aligned",
                    RulePredicate::LaneAlignment {
                        tol: params.theta_tol,
                    },
                ),
            ),
            scale: params.scale_orientation,
        },
        Rule {
            name: "min-speed".into(),
            formula: StlFormula::always(
                0,
                horizon,
                StlFormula::predicate("speed-floor", speed_at_least(params.v_min)),
            ),
            scale: params.scale_speed,
        },
        Rule {
            name: "max-speed".into(),
            formula: StlFormula::always(
                0,
                horizon,
                StlFormula::predicate("speed-ceiling", speed_at_most(params.v_max)),
            ),
            scale: params.scale_speed,
        },
    ]
}

/// The six-rule road-navigation hierarchy, priority order: no collision,
/// solid line, dashed line, end-of-horizon orientation, minimum speed,
/// maximum speed.
pub fn build_road_hierarchy(
    w: &WorldScene,
    params: &RuleParams,
    horizon: usize,
) -> Result<RuleHierarchy, RulebankError> {
    check_road_scene(w)?;
    Ok(RuleHierarchy::new(
        road_rules(params, horizon),
        params.a,
        params.c,
    )?)
}

/// Number of steps the ego must dwell in the stop zone (1 second).
pub fn stop_dwell_steps(dt: f64) -> usize {
    (1.0 / dt).ceil() as usize
}

/// The seven-rule intersection hierarchy: the road hierarchy with a
/// stop-sign rule inserted at priority 4.
///
/// The stop rule requires dwelling in the stop zone below `v_stop` for one
/// second somewhere in the horizon:
/// `Eventually[0, T-K]( Always[0, K]( in_zone AND v <= v_stop ) )`.
/// Once `stop_completed` reports that the executed trajectory already
/// finished the dwell, the rule latches to a constant satisfied margin of
/// +1 (pre-tanh); a receding-horizon plan cannot re-satisfy a past stop
/// inside a future window.
pub fn build_intersection_hierarchy(
    w: &WorldScene,
    params: &RuleParams,
    horizon: usize,
    stop_completed: bool,
) -> Result<RuleHierarchy, RulebankError> {
    check_road_scene(w)?;
    if w.map.stop_zones.is_empty() {
        return Err(RulebankError::MissingStopZones);
    }
    let k = stop_dwell_steps(w.dt);
    let dwell = StlFormula::And(vec![
        StlFormula::predicate("in-stop-zone", RulePredicate::InStopZone { zone: 0 }),
        StlFormula::predicate("stopped", speed_at_most(params.v_stop)),
    ]);
    let pending = StlFormula::eventually(
        0,
        horizon.saturating_sub(k),
        StlFormula::always(0, k, dwell),
    );
    let stop_formula = if stop_completed {
        // Disjoining a satisfied constant pins the robustness at +1 (the
        // dwell margin is capped at v_stop < 1) while keeping the per-cycle
        // evaluation cost identical to the unlatched rule.
        StlFormula::Or(vec![pending, StlFormula::predicate("stop-done", constant(1.0))])
    } else {
        pending
    };
    let mut rules = road_rules(params, horizon);
    rules.insert(
        3,
        Rule {
            name: "stop-sign".into(),
            formula: stop_formula,
            scale: params.scale_stop,
        },
    );
    Ok(RuleHierarchy::new(rules, params.a, params.c)?)
}
