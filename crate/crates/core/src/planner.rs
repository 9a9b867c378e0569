//! Two-stage receding-horizon planner: exhaustive primitive-tree search
//! warm-starting Adam refinement of the smooth rank-preserving reward.

use cpu_time::ThreadTime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Scalar;
use crate::dynamics::{
    flatten_controls, lift_controls, rollout, rollout_states, unflatten_controls, ControlInput,
    DynamicsError, EgoState, Trajectory, VehicleParams,
};
use crate::hierarchy::{rank, HierarchyError, RuleHierarchy};
use crate::world::WorldScene;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("empty primitive action set")]
    EmptyActionSet,
    #[error("horizon must be at least 1 step")]
    ZeroHorizon,
    #[error("segment length must be at least 1 step")]
    ZeroSegment,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Planning horizon T in steps.
    pub horizon: usize,
    /// Steps per primitive segment (tau).
    pub segment_len: usize,
    /// Steps executed before replanning.
    pub execute_steps: usize,
    pub learning_rate: f64,
    /// Adam iterations per cycle.
    pub max_iters: usize,
    /// Log-sum-exp temperature of the smooth semantics.
    pub temperature: f64,
    pub dt: f64,
    pub vehicle: VehicleParams,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            segment_len: 2,
            execute_steps: 1,
            learning_rate: 0.01,
            max_iters: 10,
            temperature: 0.05,
            dt: 0.2,
            vehicle: VehicleParams::default(),
        }
    }
}

/// All piecewise-constant control sequences over the primitive action set,
/// each pre-rolled from the shared initial state. Branch `b`'s segment
/// actions are the base-|M| digits of `b`, most significant segment first,
/// so enumeration order is deterministic.
pub struct PrimitiveTree {
    pub branches: Vec<Branch>,
    pub action_set: Vec<ControlInput>,
    pub segment_len: usize,
}

pub struct Branch {
    pub controls: Vec<ControlInput>,
    pub states: Vec<EgoState<f64>>,
}

/// Builds the primitive tree by depth-first expansion, reusing shared
/// prefix rollouts. The result is identical to rolling out each of the
/// `|M|^ceil(T/tau)` sequences independently; the last segment is truncated
/// when `tau` does not divide `T`.
pub fn generate_primitive_tree(
    x0: &EgoState<f64>,
    action_set: &[ControlInput],
    segment_len: usize,
    horizon: usize,
    dt: f64,
    vehicle: &VehicleParams,
) -> Result<PrimitiveTree, PlannerError> {
    if action_set.is_empty() {
        return Err(PlannerError::EmptyActionSet);
    }
    if horizon == 0 {
        return Err(PlannerError::ZeroHorizon);
    }
    if segment_len == 0 {
        return Err(PlannerError::ZeroSegment);
    }
    let clamped: Vec<ControlInput> = action_set.iter().map(|&u| vehicle.clamp(u)).collect();
    let depth = horizon.div_ceil(segment_len);
    let mut branches = Vec::with_capacity(clamped.len().pow(depth as u32));

    fn expand(
        states: &mut Vec<EgoState<f64>>,
        controls: &mut Vec<ControlInput>,
        actions: &[ControlInput],
        segment_len: usize,
        horizon: usize,
        dt: f64,
        vehicle: &VehicleParams,
        out: &mut Vec<Branch>,
    ) {
        if controls.len() >= horizon {
            out.push(Branch {
                controls: controls.clone(),
                states: states.clone(),
            });
            return;
        }
        let steps = segment_len.min(horizon - controls.len());
        for &action in actions {
            for _ in 0..steps {
                let next = crate::dynamics::step(
                    states.last().unwrap(),
                    &action.alpha,
                    &action.delta,
                    dt,
                    vehicle,
                );
                states.push(next);
                controls.push(action);
            }
            expand(states, controls, actions, segment_len, horizon, dt, vehicle, out);
            states.truncate(states.len() - steps);
            controls.truncate(controls.len() - steps);
        }
    }

    let mut states = vec![x0.clone()];
    let mut controls = Vec::new();
    expand(
        &mut states,
        &mut controls,
        &clamped,
        segment_len,
        horizon,
        dt,
        vehicle,
        &mut branches,
    );
    Ok(PrimitiveTree {
        branches,
        action_set: clamped,
        segment_len,
    })
}

/// Smooth reward of a plain (already rolled out) state sequence.
fn smooth_reward_plain(
    states: &[EgoState<f64>],
    hierarchy: &RuleHierarchy,
    w: &WorldScene,
    temperature: f64,
) -> Result<f64, HierarchyError> {
    let rho = hierarchy.robustness_smooth(states, w, temperature)?;
    Ok(hierarchy.reward_smooth(&rho))
}

/// Stage 1: pick the branch with the highest smooth reward, breaking ties
/// by the lowest branch index.
pub fn stage1_select(
    tree: &PrimitiveTree,
    hierarchy: &RuleHierarchy,
    w: &WorldScene,
    temperature: f64,
) -> Result<(usize, f64), PlannerError> {
    let mut best_index = 0usize;
    let mut best_reward = f64::NEG_INFINITY;
    for (index, branch) in tree.branches.iter().enumerate() {
        let reward = smooth_reward_plain(&branch.states, hierarchy, w, temperature)?;
        if reward > best_reward {
            best_reward = reward;
            best_index = index;
        }
    }
    Ok((best_index, best_reward))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineInfo {
    pub reward_init: f64,
    pub reward_best: f64,
    /// Iteration (1-based) that produced the best iterate; 0 for the warm
    /// start itself.
    pub best_iteration: usize,
    /// Set when refinement stopped on a non-finite gradient.
    pub aborted_non_finite: bool,
}

/// Stage 2: Adam on the negated smooth reward, re-clamping controls after
/// every step and returning the best iterate seen (never worse than the
/// warm start). Moment buffers start fresh each call.
pub fn stage2_refine(
    u_init: &[ControlInput],
    x0: &EgoState<f64>,
    hierarchy: &RuleHierarchy,
    w: &WorldScene,
    config: &PlannerConfig,
) -> Result<(Vec<ControlInput>, RefineInfo), PlannerError> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    let vehicle = &config.vehicle;
    let clamp_flat = |flat: &mut [f64]| {
        for pair in flat.chunks_mut(2) {
            pair[0] = pair[0].clamp(-vehicle.alpha_max, vehicle.alpha_max);
            pair[1] = pair[1].clamp(-vehicle.delta_max, vehicle.delta_max);
        }
    };

    let eval_with_grad = |flat: &[f64]| -> Result<(f64, Vec<f64>), PlannerError> {
        let controls = unflatten_controls(flat);
        let lifted = lift_controls(&controls);
        let states = rollout_states(x0.lift(), &lifted, config.dt, vehicle);
        let rho = hierarchy.robustness_smooth(&states, w, config.temperature)?;
        let reward = hierarchy.reward_smooth(&rho);
        Ok((reward.value(), reward.gradient(flat.len())))
    };

    let mut flat = flatten_controls(u_init);
    clamp_flat(&mut flat);
    let dim = flat.len();

    let (reward_init, mut grad) = eval_with_grad(&flat)?;
    let mut best_flat = flat.clone();
    let mut best_reward = reward_init;
    let mut best_iteration = 0usize;
    let mut aborted = false;

    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    for k in 1..=config.max_iters {
        if grad.iter().any(|g| !g.is_finite()) {
            aborted = true;
            break;
        }
        for j in 0..dim {
            // Minimize the negated reward: descend along -grad(reward).
            let g = -grad[j];
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * g;
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * g * g;
            let m_hat = m[j] / (1.0 - BETA1.powi(k as i32));
            let v_hat = v[j] / (1.0 - BETA2.powi(k as i32));
            flat[j] -= config.learning_rate * m_hat / (v_hat.sqrt() + EPS);
        }
        clamp_flat(&mut flat);
        let (reward, next_grad) = eval_with_grad(&flat)?;
        if reward > best_reward {
            best_reward = reward;
            best_flat = flat.clone();
            best_iteration = k;
        }
        grad = next_grad;
    }

    Ok((
        unflatten_controls(&best_flat),
        RefineInfo {
            reward_init,
            reward_best: best_reward,
            best_iteration,
            aborted_non_finite: aborted,
        },
    ))
}

/// Everything observable about one planning cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleDiagnostics {
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
    pub branch_index: usize,
    pub branch_count: usize,
    /// Scaled hard robustness of the refined plan.
    pub rho_hard: Vec<f64>,
    pub rank_stage1: u64,
    pub rank_refined: u64,
    pub reward_stage1: f64,
    pub reward_refined: f64,
    pub refine_aborted: bool,
    /// Instrumentation: optimization problems solved this cycle.
    pub tree_searches: usize,
    pub gradient_runs: usize,
}

pub struct CyclePlan {
    /// Controls to execute before replanning (`execute_steps` of them).
    pub execute: Vec<ControlInput>,
    /// The full refined plan over the horizon.
    pub planned: Trajectory,
    pub diagnostics: CycleDiagnostics,
}

/// One receding-horizon cycle: primitive-tree search, then gradient
/// refinement of the winning branch.
pub fn plan_cycle(
    x0: &EgoState<f64>,
    w: &WorldScene,
    hierarchy: &RuleHierarchy,
    action_set: &[ControlInput],
    config: &PlannerConfig,
) -> Result<CyclePlan, PlannerError> {
    // Thread CPU time: planner cost independent of scheduler preemption.
    let t1 = ThreadTime::now();
    let tree = generate_primitive_tree(
        x0,
        action_set,
        config.segment_len,
        config.horizon,
        config.dt,
        &config.vehicle,
    )?;
    let (branch_index, reward_stage1) = stage1_select(&tree, hierarchy, w, config.temperature)?;
    let stage1_seconds = t1.elapsed().as_secs_f64();

    let t2 = ThreadTime::now();
    let warm = &tree.branches[branch_index];
    let rank_stage1 = rank(&hierarchy.robustness_hard(&warm.states, w)?);
    let (refined, info) = stage2_refine(&warm.controls, x0, hierarchy, w, config)?;
    let planned = rollout(x0, &refined, config.dt, &config.vehicle)?;
    let rho_hard = hierarchy.robustness_hard(&planned.states, w)?;
    let rank_refined = rank(&rho_hard);
    let stage2_seconds = t2.elapsed().as_secs_f64();

    let execute = planned.controls[..config.execute_steps.min(planned.controls.len())].to_vec();
    Ok(CyclePlan {
        execute,
        planned,
        diagnostics: CycleDiagnostics {
            stage1_seconds,
            stage2_seconds,
            branch_index,
            branch_count: tree.branches.len(),
            rho_hard,
            rank_stage1,
            rank_refined,
            reward_stage1,
            reward_refined: info.reward_best,
            refine_aborted: info.aborted_non_finite,
            tree_searches: 1,
            gradient_runs: 1,
        },
    })
}

/// The default primitive action set: accelerations crossed with steering
/// angles, enumerated acceleration-major.
pub fn action_grid(accelerations: &[f64], steerings: &[f64]) -> Vec<ControlInput> {
    let mut out = Vec::with_capacity(accelerations.len() * steerings.len());
    for &alpha in accelerations {
        for &delta in steerings {
            out.push(ControlInput::new(alpha, delta));
        }
    }
    out
}
