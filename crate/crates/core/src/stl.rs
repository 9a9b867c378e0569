//! STL formulas over ego trajectories in a world scene, with quantitative
//! robustness in hard (exact min/max) and smooth (log-sum-exp) semantics.
//!
//! Hard robustness is used for ranking and reporting and is never
//! differentiated; the smooth recursion shares the same code path through
//! [`MinMaxMode`] and flows gradients to the controls through a
//! differentiable rollout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{MinMaxMode, Scalar};
use crate::dynamics::{wrap_angle, EgoState};
use crate::world::{
    nearest_lane_heading, occupancy_margin_at, signed_lateral_offset, stop_zone_margin, LineKind,
    WorldScene,
};

#[derive(Debug, Error)]
pub enum StlError {
    #[error("horizon too short for formula: needs step {needed}, trajectory has {len} states")]
    HorizonTooShort { needed: usize, len: usize },
}

/// Atomic state predicates; each evaluates to a signed margin (positive
/// means satisfied) at one trajectory step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RulePredicate {
    /// `wx*px + wy*py + wpsi*psi + wv*v + bias`; covers the speed rules and
    /// arbitrary affine test predicates.
    Linear {
        wx: f64,
        wy: f64,
        wpsi: f64,
        wv: f64,
        bias: f64,
    },
    /// Smallest keep-out margin over all non-ego agents at the step.
    CollisionMargin,
    /// Signed offset to the nearest lane line of the given kind; positive on
    /// the lane-keeping side.
    LaneLineOffset { kind: LineKind },
    /// `tol - |psi - lane_heading(position)|` against the nearest lane
    /// center point.
    LaneAlignment { tol: f64 },
    /// Margin of the ego position inside stop zone `zone` (positive inside).
    InStopZone { zone: usize },
}

impl RulePredicate {
    pub fn margin<S: Scalar>(
        &self,
        states: &[EgoState<S>],
        w: &WorldScene,
        t: usize,
        mode: MinMaxMode,
    ) -> S {
        let s = &states[t];
        match self {
            RulePredicate::Linear {
                wx,
                wy,
                wpsi,
                wv,
                bias,
            } => {
                s.px.scale(*wx) + s.py.scale(*wy) + s.psi.scale(*wpsi) + s.v.scale(*wv).shift(*bias)
            }
            RulePredicate::CollisionMargin => {
                let margins: Vec<S> = w
                    .non_ego
                    .iter()
                    .map(|track| {
                        occupancy_margin_at(&s.px, &s.py, track, t, w.keepout_axis_aligned, mode)
                    })
                    .collect();
                assert!(!margins.is_empty(), "collision predicate needs non-ego agents");
                S::reduce_min(&margins, mode)
            }
            RulePredicate::LaneLineOffset { kind } => {
                let p = [s.px.value(), s.py.value()];
                let line = w
                    .map
                    .lane_lines
                    .iter()
                    .filter(|l| l.kind == *kind)
                    .min_by(|a, b| {
                        dist_to_polyline(p, &a.points)
                            .total_cmp(&dist_to_polyline(p, &b.points))
                    })
                    .unwrap_or_else(|| panic!("no {kind:?} lane line in map"));
                signed_lateral_offset(&s.px, &s.py, &line.points)
            }
            RulePredicate::LaneAlignment { tol } => {
                let heading = nearest_lane_heading(&w.map, [s.px.value(), s.py.value()])
                    .expect("lane alignment predicate needs lanes");
                let diff = wrap_angle(s.psi.shift(-heading));
                (-diff.abs()).shift(*tol)
            }
            RulePredicate::InStopZone { zone } => {
                let zone = &w.map.stop_zones[*zone];
                stop_zone_margin(&s.px, &s.py, zone, mode)
            }
        }
    }
}

fn dist_to_polyline(p: [f64; 2], points: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() - 1 {
        let a = points[i];
        let b = points[i + 1];
        let d = [b[0] - a[0], b[1] - a[1]];
        let len_sq = d[0] * d[0] + d[1] * d[1];
        let u = if len_sq > 0.0 {
            (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len_sq).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [a[0] + u * d[0], a[1] + u * d[1]];
        let r = [p[0] - q[0], p[1] - q[1]];
        best = best.min(r[0] * r[0] + r[1] * r[1]);
    }
    best
}

/// Bounded-future STL syntax tree. Temporal intervals are in discrete steps
/// relative to the evaluation time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StlFormula {
    Predicate { name: String, pred: RulePredicate },
    Not(Box<StlFormula>),
    And(Vec<StlFormula>),
    Or(Vec<StlFormula>),
    Always { lo: usize, hi: usize, inner: Box<StlFormula> },
    Eventually { lo: usize, hi: usize, inner: Box<StlFormula> },
}

impl StlFormula {
    pub fn predicate(name: impl Into<String>, pred: RulePredicate) -> Self {
        StlFormula::Predicate {
            name: name.into(),
            pred,
        }
    }

    pub fn always(lo: usize, hi: usize, inner: StlFormula) -> Self {
        assert!(lo <= hi, "interval must satisfy lo <= hi");
        StlFormula::Always {
            lo,
            hi,
            inner: Box::new(inner),
        }
    }

    pub fn eventually(lo: usize, hi: usize, inner: StlFormula) -> Self {
        assert!(lo <= hi, "interval must satisfy lo <= hi");
        StlFormula::Eventually {
            lo,
            hi,
            inner: Box::new(inner),
        }
    }
}

/// Converts an interval in seconds to steps, rounding outward so the
/// discrete window never shrinks below the continuous one.
pub fn interval_steps(lo_seconds: f64, hi_seconds: f64, dt: f64) -> (usize, usize) {
    let lo = (lo_seconds / dt).floor().max(0.0) as usize;
    let hi = (hi_seconds / dt).ceil().max(0.0) as usize;
    (lo, hi.max(lo))
}

fn eval<S: Scalar>(
    phi: &StlFormula,
    states: &[EgoState<S>],
    w: &WorldScene,
    t: usize,
    mode: MinMaxMode,
) -> Result<S, StlError> {
    match phi {
        StlFormula::Predicate { pred, .. } => {
            if t >= states.len() {
                return Err(StlError::HorizonTooShort {
                    needed: t,
                    len: states.len(),
                });
            }
            Ok(pred.margin(states, w, t, mode))
        }
        StlFormula::Not(inner) => Ok(-eval(inner, states, w, t, mode)?),
        StlFormula::And(parts) => {
            assert!(!parts.is_empty(), "And needs at least one operand");
            let vals = parts
                .iter()
                .map(|p| eval(p, states, w, t, mode))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(S::reduce_min(&vals, mode))
        }
        StlFormula::Or(parts) => {
            assert!(!parts.is_empty(), "Or needs at least one operand");
            let vals = parts
                .iter()
                .map(|p| eval(p, states, w, t, mode))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(S::reduce_max(&vals, mode))
        }
        StlFormula::Always { lo, hi, inner } => {
            let vals = (t + lo..=t + hi)
                .map(|u| eval(inner, states, w, u, mode))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(S::reduce_min(&vals, mode))
        }
        StlFormula::Eventually { lo, hi, inner } => {
            let vals = (t + lo..=t + hi)
                .map(|u| eval(inner, states, w, u, mode))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(S::reduce_max(&vals, mode))
        }
    }
}

/// Quantitative robustness with exact min/max semantics. A value of exactly
/// zero counts as satisfied under the rank step convention.
pub fn robustness_hard(
    phi: &StlFormula,
    states: &[EgoState<f64>],
    w: &WorldScene,
    t: usize,
) -> Result<f64, StlError> {
    eval(phi, states, w, t, MinMaxMode::Hard)
}

/// Smooth robustness: the same recursion with log-sum-exp min/max at the
/// given temperature. Works over plain values (branch scoring) and
/// [`crate::autodiff::DiffScalar`] trajectories (gradient refinement).
pub fn robustness_smooth<S: Scalar>(
    phi: &StlFormula,
    states: &[EgoState<S>],
    w: &WorldScene,
    temperature: f64,
) -> Result<S, StlError> {
    eval(phi, states, w, 0, MinMaxMode::Smooth { temperature })
}
