//! End-to-end acceptance checks. Each criterion prints one pass/fail line
//! (visible with `--nocapture`); the test fails if any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rh_core::dynamics::EgoState;
use rh_core::hierarchy::{rank, reward_hard};
use rh_core::planner::{action_grid, generate_primitive_tree, stage1_select, PlannerConfig};
use rh_core::rulebank::build_road_hierarchy;
use rh_core::stl::{robustness_hard, RulePredicate, StlFormula};
use rh_core::world::{MapModel, WorldScene};
use rh_sim::gradcheck::run_gradcheck;
use rh_sim::runner::{run_scenario, write_trace, RunOutput};
use rh_sim::scenario::{load_scenario, scenario_names, Scenario};
use rh_sim::surface::{quadrant_means, reward_surface};

const A: f64 = 2.01;
const C: f64 = 30.0;

struct Criterion {
    label: &'static str,
    passed: bool,
    detail: String,
}

fn report(results: &mut Vec<Criterion>, label: &'static str, passed: bool, detail: String) {
    // Written straight to the stderr stream so the lines survive the test
    // harness's output capture and show up even on fully passing runs.
    use std::io::Write;
    writeln!(
        std::io::stderr(),
        "criterion {:02} {label}: {} ({detail})",
        results.len() + 1,
        if passed { "pass" } else { "FAIL" }
    )
    .unwrap();
    results.push(Criterion {
        label,
        passed,
        detail,
    });
}

/// 1: over random robustness pairs, a strictly better rank always gets a
/// strictly higher hard reward.
fn check_rank_preservation(results: &mut Vec<Criterion>) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut violations = 0usize;
    for n in 1..=6usize {
        for _ in 0..10_000 {
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(-A / 2.0..A / 2.0)).collect()
            };
            let rho = draw(&mut rng);
            let rho2 = draw(&mut rng);
            let better_rank = rank(&rho) < rank(&rho2);
            let reward = reward_hard(&rho, A).unwrap();
            let reward2 = reward_hard(&rho2, A).unwrap();
            if better_rank && reward <= reward2 {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        results,
        "rank-preservation",
        violations == 0 && elapsed < 5.0,
        format!("{violations} violations over 60000 pairs, {elapsed:.2} s"),
    );
}

/// 2: the two reward-bound inequalities behind rank preservation.
fn check_reward_bounds(results: &mut Vec<Criterion>) {
    // Bound 1: the total step reward of rules below priority k stays under
    // the step-reward gap a^(N-k+1) - a, for every satisfaction pattern.
    let mut claim_one_ok = true;
    for n in 1..=6usize {
        for k in 1..=n {
            let tail = n - k;
            for bits in 0..(1u32 << tail) {
                let mut sum = 0.0;
                for j in 0..tail {
                    if bits & (1 << j) != 0 {
                        let i = k + 1 + j;
                        sum += A.powi((n - i + 1) as i32);
                    }
                }
                let bound = A.powi((n - k + 1) as i32) - A;
                // At k = N both sides are exactly zero; the strict version
                // applies to k < N.
                let ok = if k < n { sum < bound } else { sum == 0.0 && bound == 0.0 };
                if !ok {
                    claim_one_ok = false;
                }
            }
        }
    }
    // Bound 2: mean robustness terms differ by less than a, for any pair of
    // vectors in [-a/2, a/2]^N including the boundary.
    let mut claim_two_ok = true;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=6);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-A / 2.0..A / 2.0)).collect()
        };
        if mean(&draw(&mut rng)) - A > mean(&draw(&mut rng)) + 1e-12 {
            claim_two_ok = false;
        }
    }
    for n in 1..=6usize {
        let hi = vec![A / 2.0; n];
        let lo = vec![-A / 2.0; n];
        if (mean(&hi) - A - mean(&lo)).abs() > 1e-12 {
            claim_two_ok = false;
        }
    }
    report(
        results,
        "reward-bound-inequalities",
        claim_one_ok && claim_two_ok,
        format!("step bound: {claim_one_ok}, mean bound: {claim_two_ok}"),
    );
}

/// 3: with three rules, each satisfaction pattern maps to its tabulated rank.
fn check_three_rule_ranks(results: &mut Vec<Criterion>) {
    // (satisfied rule indices, expected rank), rank 1 = everything holds.
    let table: [(&[usize], u64); 8] = [
        (&[1, 2, 3], 1),
        (&[1, 2], 2),
        (&[1, 3], 3),
        (&[1], 4),
        (&[2, 3], 5),
        (&[2], 6),
        (&[3], 7),
        (&[], 8),
    ];
    let mut ok = true;
    for (satisfied, expected) in table {
        let rho: Vec<f64> = (1..=3)
            .map(|i| if satisfied.contains(&i) { 0.5 } else { -0.5 })
            .collect();
        if rank(&rho) != expected {
            ok = false;
        }
    }
    report(results, "three-rule-rank-table", ok, "8 patterns".into());
}

/// 4: analytic gradient of the smooth reward matches finite differences.
fn check_gradients(results: &mut Vec<Criterion>) {
    let start = Instant::now();
    let rep = run_gradcheck(50, 7);
    let elapsed = start.elapsed().as_secs_f64();
    report(
        results,
        "gradient-finite-difference",
        rep.passed() && elapsed < 30.0,
        format!(
            "max rel err {:.2e} over {} entries, {elapsed:.2} s",
            rep.max_rel_error, rep.checked_entries
        ),
    );
}

fn random_formula(rng: &mut ChaCha8Rng, depth: usize, window_budget: usize) -> StlFormula {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        return StlFormula::predicate(
            "affine",
            RulePredicate::Linear {
                wx: rng.gen_range(-1.0..1.0),
                wy: rng.gen_range(-1.0..1.0),
                wpsi: rng.gen_range(-1.0..1.0),
                wv: rng.gen_range(-1.0..1.0),
                bias: rng.gen_range(-2.0..2.0),
            },
        );
    }
    match rng.gen_range(0..5) {
        0 => StlFormula::Not(Box::new(random_formula(rng, depth - 1, window_budget))),
        1 => StlFormula::And(
            (0..rng.gen_range(2..=3))
                .map(|_| random_formula(rng, depth - 1, window_budget))
                .collect(),
        ),
        2 => StlFormula::Or(
            (0..rng.gen_range(2..=3))
                .map(|_| random_formula(rng, depth - 1, window_budget))
                .collect(),
        ),
        3 => {
            let lo = rng.gen_range(0..=window_budget / 2);
            let hi = rng.gen_range(lo..=window_budget);
            StlFormula::always(lo, hi, random_formula(rng, depth - 1, window_budget - hi))
        }
        _ => {
            let lo = rng.gen_range(0..=window_budget / 2);
            let hi = rng.gen_range(lo..=window_budget);
            StlFormula::eventually(lo, hi, random_formula(rng, depth - 1, window_budget - hi))
        }
    }
}

/// Boolean semantics evaluated directly, sharing nothing with the
/// robustness recursion.
fn holds(phi: &StlFormula, states: &[EgoState<f64>], t: usize) -> bool {
    match phi {
        StlFormula::Predicate { pred, .. } => match pred {
            RulePredicate::Linear {
                wx,
                wy,
                wpsi,
                wv,
                bias,
            } => {
                let s = &states[t];
                wx * s.px + wy * s.py + wpsi * s.psi + wv * s.v + bias > 0.0
            }
            _ => unreachable!("generator only emits affine predicates"),
        },
        StlFormula::Not(inner) => !holds(inner, states, t),
        StlFormula::And(parts) => parts.iter().all(|p| holds(p, states, t)),
        StlFormula::Or(parts) => parts.iter().any(|p| holds(p, states, t)),
        StlFormula::Always { lo, hi, inner } => {
            (t + lo..=t + hi).all(|u| holds(inner, states, u))
        }
        StlFormula::Eventually { lo, hi, inner } => {
            (t + lo..=t + hi).any(|u| holds(inner, states, u))
        }
    }
}

/// 5: the sign of hard robustness agrees with direct boolean evaluation.
fn check_stl_sign_agreement(results: &mut Vec<Criterion>) {
    let w = WorldScene {
        map: MapModel {
            lane_lines: vec![],
            lanes: vec![],
            stop_zones: vec![],
        },
        non_ego: vec![],
        dt: 0.2,
        keepout_axis_aligned: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let len = 12usize;
    let mut compared = 0usize;
    let mut disagreements = 0usize;
    for _ in 0..1_000 {
        let phi = random_formula(&mut rng, 3, len - 1);
        let states: Vec<EgoState<f64>> = (0..len)
            .map(|_| {
                EgoState::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..4.0),
                )
            })
            .collect();
        let rho = robustness_hard(&phi, &states, &w, 0).unwrap();
        if rho.abs() <= 1e-9 {
            continue;
        }
        compared += 1;
        if (rho > 0.0) != holds(&phi, &states, 0) {
            disagreements += 1;
        }
    }
    report(
        results,
        "robustness-sign-agreement",
        disagreements == 0 && compared > 900,
        format!("{disagreements} disagreements over {compared} formulas"),
    );
}

/// 6: the default primitive tree has 6^5 branches and stage 1 picks the same
/// branch as scoring every branch independently.
fn check_tree_and_stage1(results: &mut Vec<Criterion>) {
    let scenario = load_scenario("overtake-from-lane").unwrap();
    let cfg = PlannerConfig::default();
    let w = scenario.world(cfg.horizon + 1);
    let h = build_road_hierarchy(&w, &scenario.rules, cfg.horizon).unwrap();
    let actions = action_grid(
        &[-cfg.vehicle.alpha_max, cfg.vehicle.alpha_max],
        &[-cfg.vehicle.delta_max, 0.0, cfg.vehicle.delta_max],
    );
    let tree = generate_primitive_tree(
        &scenario.initial_ego(),
        &actions,
        cfg.segment_len,
        cfg.horizon,
        cfg.dt,
        &cfg.vehicle,
    )
    .unwrap();
    let shape_ok = tree.branches.len() == 7_776;

    let (selected, selected_reward) = stage1_select(&tree, &h, &w, cfg.temperature).unwrap();
    let mut brute_best = 0usize;
    let mut brute_reward = f64::NEG_INFINITY;
    for (i, branch) in tree.branches.iter().enumerate() {
        let rho = h
            .robustness_smooth(&branch.states, &w, cfg.temperature)
            .unwrap();
        let reward = h.reward_smooth(&rho);
        if reward > brute_reward {
            brute_reward = reward;
            brute_best = i;
        }
    }
    let select_ok = selected == brute_best && (selected_reward - brute_reward).abs() < 1e-12;
    report(
        results,
        "tree-shape-and-stage1",
        shape_ok && select_ok,
        format!("{} branches, argmax {selected} vs {brute_best}", tree.branches.len()),
    );
}

fn violated_set(output: &RunOutput) -> BTreeSet<String> {
    output.summary.violated_rules.iter().cloned().collect()
}

fn stopped_run_len(states: &[EgoState<f64>]) -> usize {
    let mut best = 0usize;
    let mut run = 0usize;
    for s in states {
        if s.v < 0.5 {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Step index at which the ego first enters the cross-traffic corridor
/// |x - blue_x0| < gap, if ever.
fn crossing_step(scenario: &Scenario, output: &RunOutput, gap: f64) -> Option<usize> {
    let blue = scenario.agents.iter().find(|a| a.name == "blue").unwrap();
    output
        .executed_states
        .iter()
        .position(|s| (s.px - blue.x).abs() < gap)
}

/// 7: the six scenarios violate exactly the rules their narratives allow and
/// order themselves correctly around other traffic.
fn check_scenario_signatures(runs: &[(Scenario, RunOutput)], results: &mut Vec<Criterion>) {
    let expected: &[(&str, &[&str])] = &[
        ("overtake-from-lane", &["dashed-line"]),
        ("overtake-from-shoulder", &["solid-line"]),
        ("stop-instead-of-overtake", &["min-speed"]),
        ("double-parked", &[]),
        ("intersection-wait", &["min-speed", "stop-sign"]),
        ("intersection-go", &["min-speed", "stop-sign"]),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, rules) in expected {
        let (scenario, output) = runs
            .iter()
            .find(|(s, _)| s.name == *name)
            .expect("scenario was run");
        let want: BTreeSet<String> = rules.iter().map(|r| r.to_string()).collect();
        let got = violated_set(output);
        if got != want {
            ok = false;
            notes.push(format!("{name} violated {got:?}"));
        }
        if got.contains("no-collision") {
            ok = false;
            notes.push(format!("{name} had a collision"));
        }
        match *name {
            "stop-instead-of-overtake" => {
                if !output.executed_states.iter().any(|s| s.v < 0.5) {
                    ok = false;
                    notes.push(format!("{name} never halted"));
                }
            }
            "intersection-wait" | "intersection-go" => {
                let dwell = stopped_run_len(&output.executed_states);
                let full_second = (1.0 / scenario.planner.dt).ceil() as usize + 1;
                if output.summary.stop_latched_cycle.is_none() || dwell < full_second {
                    ok = false;
                    notes.push(format!("{name} stop dwell {dwell} states"));
                }
                let blue = scenario.agents.iter().find(|a| a.name == "blue").unwrap();
                match crossing_step(scenario, output, 2.0 + blue.half_extents[1]) {
                    Some(step) => {
                        let t = step as f64 * scenario.planner.dt;
                        let blue_y = blue.y + blue.speed * t * blue.heading.sin();
                        let clearance = 5.0 + blue.half_extents[0];
                        let ordered = if *name == "intersection-wait" {
                            // Yield: cross only after blue has left the box.
                            blue_y < -clearance
                        } else {
                            // Proceed: cross before blue gets near.
                            blue_y > clearance
                        };
                        if !ordered {
                            ok = false;
                            notes.push(format!("{name} crossed with blue at y={blue_y:.1}"));
                        }
                    }
                    None => {
                        ok = false;
                        notes.push(format!("{name} never crossed"));
                    }
                }
            }
            _ => {}
        }
    }
    let detail = if notes.is_empty() {
        "6 scenarios".to_string()
    } else {
        notes.join("; ")
    };
    report(results, "scenario-signatures", ok, detail);
}

/// 8: gradient refinement never returns a worse smooth reward or a worse
/// hard rank than its stage-1 warm start.
fn check_refinement_contract(runs: &[(Scenario, RunOutput)], results: &mut Vec<Criterion>) {
    let mut ok = true;
    let mut cycles = 0usize;
    for (scenario, output) in runs {
        if output.summary.rank_regressions != 0 {
            ok = false;
        }
        for cycle in &output.trace {
            cycles += 1;
            if cycle.reward_refined < cycle.reward_stage1 - 1e-12
                || cycle.rank > cycle.rank_stage1
            {
                ok = false;
            }
        }
        let _ = scenario;
    }
    report(
        results,
        "refinement-never-degrades",
        ok,
        format!("{cycles} cycles"),
    );
}

/// 9: on the two-rule reward surface, quadrant means are strictly ordered by
/// the satisfaction pattern.
fn check_surface_quadrants(results: &mut Vec<Criterion>) {
    let grid = reward_surface(A, C, 101).unwrap();
    let q = quadrant_means(&grid);
    // (-,-) < (-,+) < (+,-) < (+,+)
    let ok = grid.len() == 101 * 101 && q[0] < q[1] && q[1] < q[2] && q[2] < q[3];
    report(
        results,
        "reward-surface-ordering",
        ok,
        format!("means {:.2} < {:.2} < {:.2} < {:.2}", q[0], q[1], q[2], q[3]),
    );
}

/// 10: every planning cycle is fast and cycle times are low-variance.
fn check_timing(runs: &[(Scenario, RunOutput)], results: &mut Vec<Criterion>) {
    let mut ok = true;
    let mut rows = Vec::new();
    for (scenario, output) in runs {
        let t = &output.summary.timing;
        if t.max >= 0.5 || t.std / t.mean >= 0.25 {
            ok = false;
        }
        rows.push(format!(
            "{} max {:.3} s cv {:.2}",
            scenario.name,
            t.max,
            t.std / t.mean
        ));
    }
    report(results, "cycle-timing", ok, rows.join(", "));
}

/// 11: identical configs produce byte-identical traces.
fn check_determinism(
    runs: &[(Scenario, RunOutput)],
    reruns: &[(Scenario, RunOutput)],
    results: &mut Vec<Criterion>,
) {
    let dir = std::env::temp_dir().join("rh-acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let mut ok = true;
    for ((scenario, first), (_, second)) in runs.iter().zip(reruns) {
        let path_a = dir.join(format!("{}-a.jsonl", scenario.name));
        let path_b = dir.join(format!("{}-b.jsonl", scenario.name));
        write_trace(path_a.to_str().unwrap(), first).unwrap();
        write_trace(path_b.to_str().unwrap(), second).unwrap();
        let bytes_a = std::fs::read(&path_a).unwrap();
        let bytes_b = std::fs::read(&path_b).unwrap();
        if bytes_a != bytes_b || bytes_a.is_empty() {
            ok = false;
        }
    }
    report(
        results,
        "trace-determinism",
        ok,
        format!("{} scenario pairs", runs.len()),
    );
}

#[test]
fn acceptance() {
    let mut results = Vec::new();

    check_rank_preservation(&mut results);
    check_reward_bounds(&mut results);
    check_three_rule_ranks(&mut results);
    check_gradients(&mut results);
    check_stl_sign_agreement(&mut results);
    check_tree_and_stage1(&mut results);

    let run_all = || -> Vec<(Scenario, RunOutput)> {
        scenario_names()
            .iter()
            .map(|name| {
                let scenario = load_scenario(name).unwrap();
                let output = run_scenario(&scenario, 0).unwrap();
                (scenario, output)
            })
            .collect()
    };
    let runs = run_all();
    let reruns = run_all();

    check_scenario_signatures(&runs, &mut results);
    check_refinement_contract(&runs, &mut results);
    check_surface_quadrants(&mut results);
    check_timing(&runs, &mut results);
    check_determinism(&runs, &reruns, &mut results);

    let failed: Vec<&Criterion> = results.iter().filter(|c| !c.passed).collect();
    assert!(
        failed.is_empty(),
        "failed criteria: {}",
        failed
            .iter()
            .map(|c| format!("{} ({})", c.label, c.detail))
            .collect::<Vec<_>>()
            .join("; ")
    );
}
