use clap::{Parser, Subcommand};
use rh_sim::frames::emit_frames;
use rh_sim::gradcheck::run_gradcheck;
use rh_sim::runner::{run_scenario, write_summary, write_trace};
use rh_sim::scenario::{load_scenario, scenario_names, ScenarioError};
use rh_sim::surface::emit_reward_surface;

#[derive(Parser)]
#[command(name = "rh-sim", about = "Rule-hierarchy motion planner simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario in closed loop and write a JSONL trace.
    Run {
        #[arg(long)]
        scenario: String,
        /// Override the scenario's configured cycle count.
        #[arg(long)]
        cycles: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: String,
        /// Also write one SVG frame per cycle into this directory.
        #[arg(long)]
        frames: Option<String>,
    },
    /// Run every scenario and print timing statistics per row.
    Bench {
        #[arg(long)]
        all: bool,
    },
    /// Emit the smooth-reward surface for a two-rule hierarchy as CSV.
    Surface {
        #[arg(long, default_value_t = 2.01)]
        a: f64,
        #[arg(long, default_value_t = 30.0)]
        c: f64,
        #[arg(long, default_value_t = 101)]
        res: usize,
        #[arg(long, default_value = "surface.csv")]
        out: String,
    },
    /// Verify the reward gradient against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Machine-readable failure: category and message on stderr, nonzero exit.
fn fail(category: &str, message: String) -> ! {
    eprintln!(
        "{}",
        serde_json::json!({ "error": category, "message": message })
    );
    std::process::exit(1);
}

fn categorize_scenario_err(e: &ScenarioError) -> &'static str {
    match e {
        ScenarioError::Unknown { .. } => "unknown-scenario",
        _ => "config",
    }
}

fn main() {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            cycles,
            seed,
            out,
            frames,
        } => {
            let mut s = match load_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => fail(categorize_scenario_err(&e), e.to_string()),
            };
            if let Some(cycles) = cycles {
                s.cycles = cycles;
            }
            let output = match run_scenario(&s, seed) {
                Ok(o) => o,
                Err(e) => fail("planner", e.to_string()),
            };
            if let Err(e) = write_trace(&out, &output) {
                fail("io", e.to_string());
            }
            let summary_path = format!("{out}.summary.json");
            if let Err(e) = write_summary(&summary_path, &output.summary) {
                fail("io", e.to_string());
            }
            if let Some(dir) = frames {
                if let Err(e) = emit_frames(&s, &output, &dir) {
                    fail("io", e.to_string());
                }
            }
            println!(
                "{} cycles, violated rules: {:?}, trace: {out}",
                output.trace.len(),
                output.summary.violated_rules
            );
        }
        Command::Bench { all } => {
            if !all {
                fail("config", "bench requires --all".to_string());
            }
            println!("Scenario & Mean±Std (s) & Median (s) & Max (s) & Min (s)");
            for name in scenario_names() {
                let s = match load_scenario(&name) {
                    Ok(s) => s,
                    Err(e) => fail(categorize_scenario_err(&e), e.to_string()),
                };
                let output = match run_scenario(&s, 0) {
                    Ok(o) => o,
                    Err(e) => fail("planner", e.to_string()),
                };
                println!("{}", output.summary.timing.table_row(&name));
            }
        }
        Command::Surface { a, c, res, out } => {
            if let Err(e) = emit_reward_surface(a, c, res, &out) {
                fail("io", e.to_string());
            }
            println!("wrote {res}x{res} grid to {out}");
        }
        Command::Gradcheck { trials, seed } => {
            let report = run_gradcheck(trials, seed);
            println!(
                "checked {} entries over {} trials: max rel error {:.3e} (tol {:.0e})",
                report.checked_entries, report.trials, report.max_rel_error, report.tolerance
            );
            if !report.passed() {
                fail("gradcheck", format!("max rel error {}", report.max_rel_error));
            }
        }
    }
}
