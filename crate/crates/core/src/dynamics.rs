//! Discrete-time kinematic bicycle model for the ego vehicle.
//!
//! The state is `(px, py, psi, v)` and the controls are acceleration and
//! steering angle. Integration is explicit Euler with the slip-angle form
//! of the kinematic bicycle:
//!
//! ```text
//! beta = atan(lr * tan(delta) / (lf + lr))
//! px'  = px + v * cos(psi + beta) * dt
//! py'  = py + v * sin(psi + beta) * dt
//! psi' = psi + (v / lr) * sin(beta) * dt
//! v'   = v + alpha * dt
//! ```
//!
//! The same step is used for plain `f64` rollouts and for differentiable
//! rollouts over [`DiffScalar`] controls, so the two paths agree exactly.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{DiffScalar, Scalar};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("empty control sequence")]
    EmptyControls,
    #[error("timestep must be positive, got {0}")]
    NonPositiveDt(f64),
}

/// Ego vehicle state; generic so differentiable rollouts can reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoState<S = f64> {
    pub px: S,
    pub py: S,
    pub psi: S,
    pub v: S,
}

impl EgoState<f64> {
    pub fn new(px: f64, py: f64, psi: f64, v: f64) -> Self {
        Self { px, py, psi, v }
    }

    pub fn lift(&self) -> EgoState<DiffScalar> {
        EgoState {
            px: DiffScalar::new_constant(self.px),
            py: DiffScalar::new_constant(self.py),
            psi: DiffScalar::new_constant(self.psi),
            v: DiffScalar::new_constant(self.v),
        }
    }
}

/// Acceleration (m/s^2) and steering angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub alpha: f64,
    pub delta: f64,
}

impl ControlInput {
    pub fn new(alpha: f64, delta: f64) -> Self {
        Self { alpha, delta }
    }
}

/// Vehicle geometry and actuation limits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Distance from the center of mass to the front axle (m).
    pub lf: f64,
    /// Distance from the center of mass to the rear axle (m).
    pub lr: f64,
    pub alpha_max: f64,
    pub delta_max: f64,
    /// Clamp speed at zero instead of allowing reverse motion.
    pub clamp_reverse: bool,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            lf: 1.5,
            lr: 1.5,
            alpha_max: 5.0,
            delta_max: PI / 8.0,
            clamp_reverse: true,
        }
    }
}

impl VehicleParams {
    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            alpha: u.alpha.clamp(-self.alpha_max, self.alpha_max),
            delta: u.delta.clamp(-self.delta_max, self.delta_max),
        }
    }
}

/// Dynamically feasible state sequence with the controls that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// `controls.len() + 1` states; `states[0]` is the initial state.
    pub states: Vec<EgoState<f64>>,
    /// Controls after clamping to the vehicle bounds.
    pub controls: Vec<ControlInput>,
}

/// Wraps an angle into `(-pi, pi]`. The wrap subtracts a constant multiple
/// of `2*pi`, so it is gradient-transparent for [`DiffScalar`].
pub fn wrap_angle<S: Scalar>(psi: S) -> S {
    let v = psi.value();
    let mut k = ((v + PI) / TAU).floor();
    if v - TAU * k == -PI {
        k -= 1.0;
    }
    if k == 0.0 {
        psi
    } else {
        psi.shift(-TAU * k)
    }
}

/// One explicit-Euler step of the kinematic bicycle.
///
/// Controls are used as given; callers enforce actuation bounds. Speed is
/// clamped at zero when `params.clamp_reverse` is set.
pub fn step<S: Scalar>(
    x: &EgoState<S>,
    alpha: &S,
    delta: &S,
    dt: f64,
    params: &VehicleParams,
) -> EgoState<S> {
    let beta = delta.tan().scale(params.lr / (params.lf + params.lr)).atan();
    let heading = x.psi.clone() + beta.clone();
    let px = x.px.clone() + (x.v.clone() * heading.cos()).scale(dt);
    let py = x.py.clone() + (x.v.clone() * heading.sin()).scale(dt);
    let psi = wrap_angle(x.psi.clone() + (x.v.clone() * beta.sin()).scale(dt / params.lr));
    let v = x.v.clone() + alpha.scale(dt);
    let v = if params.clamp_reverse {
        v.max_const(0.0)
    } else {
        v
    };
    EgoState { px, py, psi, v }
}

/// Integrates a control sequence without clamping; the generic path used by
/// both plain and differentiable rollouts.
pub fn rollout_states<S: Scalar>(
    x0: EgoState<S>,
    controls: &[(S, S)],
    dt: f64,
    params: &VehicleParams,
) -> Vec<EgoState<S>> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0);
    for (alpha, delta) in controls {
        let next = step(states.last().unwrap(), alpha, delta, dt, params);
        states.push(next);
    }
    states
}

/// Rolls a control sequence into a dynamically feasible trajectory; controls
/// are clamped to the vehicle bounds before integration.
pub fn rollout(
    x0: &EgoState<f64>,
    controls: &[ControlInput],
    dt: f64,
    params: &VehicleParams,
) -> Result<Trajectory, DynamicsError> {
    if controls.is_empty() {
        return Err(DynamicsError::EmptyControls);
    }
    if dt <= 0.0 {
        return Err(DynamicsError::NonPositiveDt(dt));
    }
    let clamped: Vec<ControlInput> = controls.iter().map(|&u| params.clamp(u)).collect();
    let pairs: Vec<(f64, f64)> = clamped.iter().map(|u| (u.alpha, u.delta)).collect();
    let states = rollout_states(x0.clone(), &pairs, dt, params);
    Ok(Trajectory {
        states,
        controls: clamped,
    })
}

/// Flattens controls as `[alpha_0, delta_0, alpha_1, delta_1, ...]`.
pub fn flatten_controls(controls: &[ControlInput]) -> Vec<f64> {
    let mut out = Vec::with_capacity(controls.len() * 2);
    for u in controls {
        out.push(u.alpha);
        out.push(u.delta);
    }
    out
}

pub fn unflatten_controls(flat: &[f64]) -> Vec<ControlInput> {
    assert!(flat.len() % 2 == 0, "flattened controls must pair up");
    flat.chunks(2)
        .map(|c| ControlInput::new(c[0], c[1]))
        .collect()
}

/// Lifts a control sequence into differentiation variables over the
/// flattened `2T` parameter vector, paired back up as `(alpha, delta)`.
pub fn lift_controls(controls: &[ControlInput]) -> Vec<(DiffScalar, DiffScalar)> {
    let vars = DiffScalar::variables(&flatten_controls(controls));
    vars.chunks(2)
        .map(|c| (c[0].clone(), c[1].clone()))
        .collect()
}
