//! Rule-hierarchy motion planning: differentiable signal-temporal-logic
//! robustness, a rank-preserving scalar reward over prioritized rules, and
//! a two-stage receding-horizon planner (primitive tree search followed by
//! gradient refinement).

pub mod autodiff;
pub mod dynamics;
pub mod hierarchy;
pub mod planner;
pub mod rulebank;
pub mod stl;
pub mod world;
