//! Scenario library, closed-loop simulation driver, and artifact emission
//! (JSONL traces, SVG frames, reward-surface CSV) for the rule-hierarchy
//! planner.

pub mod frames;
pub mod gradcheck;
pub mod runner;
pub mod scenario;
pub mod surface;
