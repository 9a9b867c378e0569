//! Finite-difference verification of the smooth-reward gradient on random
//! road states and controls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rh_core::dynamics::{
    flatten_controls, lift_controls, rollout_states, unflatten_controls, EgoState,
};
use rh_core::rulebank::build_road_hierarchy;
use rh_core::world::WorldScene;

use crate::scenario::load_scenario;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub trials: usize,
    pub checked_entries: usize,
    /// Largest `|analytic - fd| / (atol/rtol + max(|analytic|, |fd|))`, so
    /// `passed()` is the usual `|diff| <= atol + rtol * magnitude` check.
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

fn reward_of(
    flat: &[f64],
    x0: &EgoState<f64>,
    w: &WorldScene,
    h: &rh_core::hierarchy::RuleHierarchy,
    cfg: &rh_core::planner::PlannerConfig,
) -> f64 {
    let states = rollout_states(
        x0.clone(),
        &unflatten_controls(flat)
            .iter()
            .map(|u| (u.alpha, u.delta))
            .collect::<Vec<_>>(),
        cfg.dt,
        &cfg.vehicle,
    );
    let rho = h.robustness_smooth(&states, w, cfg.temperature).unwrap();
    h.reward_smooth(&rho)
}

/// Compares the forward-mode gradient of the smooth reward against central
/// finite differences over all 2T control entries, for `trials` random
/// states drawn around a road scenario.
pub fn run_gradcheck(trials: usize, seed: u64) -> GradCheckReport {
    let scenario = load_scenario("overtake-from-lane").expect("built-in scenario");
    let cfg = scenario.planner.clone();
    let world = scenario.world(cfg.horizon + 1);
    let h = build_road_hierarchy(&world, &scenario.rules, cfg.horizon).expect("road hierarchy");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h_step = 1e-5;
    // Central differences carry O(h^2) truncation error, so entries whose
    // true gradient is tiny need an absolute floor below which a mismatch is
    // finite-difference noise rather than a wrong derivative.
    let rtol = 1e-4;
    let atol = 1e-6;
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;

    for _ in 0..trials {
        let x0 = EgoState::new(
            rng.gen_range(-5.0..30.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-0.4..0.4),
            rng.gen_range(2.0..14.0),
        );
        let flat: Vec<f64> = (0..2 * cfg.horizon)
            .map(|i| {
                if i % 2 == 0 {
                    rng.gen_range(-4.0..4.0)
                } else {
                    rng.gen_range(-0.35..0.35)
                }
            })
            .collect();

        let lifted = lift_controls(&unflatten_controls(&flat));
        let states = rollout_states(x0.lift(), &lifted, cfg.dt, &cfg.vehicle);
        let rho = h.robustness_smooth(&states, &world, cfg.temperature).unwrap();
        let reward = h.reward_smooth(&rho);
        let analytic = reward.gradient(flat.len());
        debug_assert_eq!(flatten_controls(&unflatten_controls(&flat)), flat);

        for j in 0..flat.len() {
            let mut plus = flat.clone();
            plus[j] += h_step;
            let mut minus = flat.clone();
            minus[j] -= h_step;
            let fd = (reward_of(&plus, &x0, &world, &h, &cfg)
                - reward_of(&minus, &x0, &world, &h, &cfg))
                / (2.0 * h_step);
            let denom = atol / rtol + analytic[j].abs().max(fd.abs());
            max_rel = max_rel.max((analytic[j] - fd).abs() / denom);
            checked += 1;
        }
    }

    GradCheckReport {
        trials,
        checked_entries: checked,
        max_rel_error: max_rel,
        tolerance: rtol,
    }
}
