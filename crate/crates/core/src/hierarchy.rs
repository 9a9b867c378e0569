//! Rule hierarchies, the trajectory rank, and the rank-preserving reward.
//!
//! A hierarchy is a total order of rules, highest priority first. The rank
//! of a trajectory is
//!
//! ```text
//! r(rho) = 2^N - sum_i 2^(N-i) * step(rho_i)
//! ```
//!
//! with `step(x) = 1` for `x >= 0`. The hard reward
//!
//! ```text
//! R(rho) = sum_i ( a^(N-i+1) * step(rho_i) + rho_i / N )
//! ```
//!
//! is rank-preserving whenever `a > 2` and every component lies in
//! `[-a/2, a/2]`: a lower rank always receives a strictly higher reward,
//! and ties within a rank are broken by average robustness. The smooth
//! variant replaces the step with `sigmoid(c * rho_i)` for gradient-based
//! optimization. Raw STL robustness is squashed into range componentwise
//! with `tanh(rho_raw / s)`.

use thiserror::Error;

use crate::autodiff::Scalar;
use crate::dynamics::EgoState;
use crate::stl::{robustness_hard, robustness_smooth, StlError, StlFormula};
use crate::world::WorldScene;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("hierarchy needs at least one rule")]
    NoRules,
    #[error("reward exponent base must exceed 2, got {0}")]
    BadBase(f64),
    #[error("sigmoid sharpness must be positive, got {0}")]
    BadSharpness(f64),
    #[error("robustness scale for rule `{0}` must be positive")]
    BadScale(String),
    #[error("robustness component {index} = {value} outside [-a/2, a/2] with a = {a}")]
    OutOfRange { index: usize, value: f64, a: f64 },
    #[error(transparent)]
    Stl(#[from] StlError),
}

/// One prioritized rule: an STL formula plus the scale used to squash its
/// raw robustness with `tanh(rho / scale)`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub name: String,
    pub formula: StlFormula,
    pub scale: f64,
}

/// Ordered rules (highest priority first) with the reward parameters.
#[derive(Debug, Clone)]
pub struct RuleHierarchy {
    rules: Vec<Rule>,
    pub a: f64,
    pub c: f64,
}

impl RuleHierarchy {
    pub fn new(rules: Vec<Rule>, a: f64, c: f64) -> Result<Self, HierarchyError> {
        if rules.is_empty() {
            return Err(HierarchyError::NoRules);
        }
        if a <= 2.0 {
            return Err(HierarchyError::BadBase(a));
        }
        if c <= 0.0 {
            return Err(HierarchyError::BadSharpness(c));
        }
        for rule in &rules {
            if rule.scale <= 0.0 {
                return Err(HierarchyError::BadScale(rule.name.clone()));
            }
        }
        Ok(Self { rules, a, c })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule_names(&self) -> Vec<&str> {
        self.rules.iter().map(|r| r.name.as_str()).collect()
    }

    /// Scaled hard robustness vector `tanh(rho_hard_i / s_i)`.
    pub fn robustness_hard(
        &self,
        states: &[EgoState<f64>],
        w: &WorldScene,
    ) -> Result<Vec<f64>, HierarchyError> {
        self.rules
            .iter()
            .map(|rule| {
                let raw = robustness_hard(&rule.formula, states, w, 0)?;
                Ok((raw / rule.scale).tanh())
            })
            .collect()
    }

    /// Scaled smooth robustness vector, generic over the scalar type so the
    /// same path scores plain branches and drives gradients.
    pub fn robustness_smooth<S: Scalar>(
        &self,
        states: &[EgoState<S>],
        w: &WorldScene,
        temperature: f64,
    ) -> Result<Vec<S>, HierarchyError> {
        self.rules
            .iter()
            .map(|rule| {
                let raw = robustness_smooth(&rule.formula, states, w, temperature)?;
                Ok(raw.scale(1.0 / rule.scale).tanh())
            })
            .collect()
    }

    pub fn reward_smooth<S: Scalar>(&self, rho: &[S]) -> S {
        reward_smooth(rho, self.a, self.c)
    }
}

/// Componentwise `tanh(rho_raw_i / s_i)`; odd and monotone, so signs are
/// preserved exactly.
pub fn scale_robustness(rho_raw: &[f64], scales: &[f64]) -> Vec<f64> {
    assert_eq!(rho_raw.len(), scales.len());
    rho_raw
        .iter()
        .zip(scales)
        .map(|(r, s)| (r / s).tanh())
        .collect()
}

fn step(x: f64) -> u64 {
    if x < 0.0 {
        0
    } else {
        1
    }
}

/// Trajectory rank in `{1, ..., 2^N}`; 1 means every rule satisfied.
pub fn rank(rho: &[f64]) -> u64 {
    let n = rho.len() as u32;
    let mut r = 1u64 << n;
    for (i, &x) in rho.iter().enumerate() {
        r -= (1u64 << (n as usize - i - 1)) * step(x);
    }
    r
}

/// The hard rank-preserving reward. Errors if the rank-preservation preconditions
/// (`a > 2`, components in `[-a/2, a/2]`) are violated; the tanh scaling
/// makes them hold by construction, so a violation is a wiring bug.
pub fn reward_hard(rho: &[f64], a: f64) -> Result<f64, HierarchyError> {
    if a <= 2.0 {
        return Err(HierarchyError::BadBase(a));
    }
    let n = rho.len();
    for (index, &value) in rho.iter().enumerate() {
        if !(value >= -a / 2.0 && value <= a / 2.0) {
            return Err(HierarchyError::OutOfRange { index, value, a });
        }
    }
    let mut total = 0.0;
    for (i, &x) in rho.iter().enumerate() {
        total += a.powi((n - i) as i32) * step(x) as f64 + x / n as f64;
    }
    Ok(total)
}

/// The sigmoid-smoothed reward `sum_i a^(N-i+1) * sigmoid(c * rho_i) +
/// rho_i / N`.
pub fn reward_smooth<S: Scalar>(rho: &[S], a: f64, c: f64) -> S {
    assert!(a > 2.0, "reward base must exceed 2");
    assert!(c > 0.0, "sigmoid sharpness must be positive");
    let n = rho.len();
    let mut total = S::constant(0.0);
    for (i, x) in rho.iter().enumerate() {
        let weight = a.powi((n - i) as i32);
        total = total + x.scale(c).sigmoid().scale(weight) + x.scale(1.0 / n as f64);
    }
    total
}

/// Evaluates a hierarchy end-to-end in hard semantics: scaled robustness
/// vector, rank, and reward.
pub fn evaluate_hard(
    hierarchy: &RuleHierarchy,
    states: &[EgoState<f64>],
    w: &WorldScene,
) -> Result<(Vec<f64>, u64, f64), HierarchyError> {
    let rho = hierarchy.robustness_hard(states, w)?;
    let r = rank(&rho);
    let reward = reward_hard(&rho, hierarchy.a)?;
    Ok((rho, r, reward))
}
