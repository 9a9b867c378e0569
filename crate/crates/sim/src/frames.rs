//! SVG snapshot rendering: one frame per planning cycle showing the map,
//! the non-ego keep-out boxes, the ego pose, and planned vs executed paths.

use std::fmt::Write as _;

use rh_core::world::{LineKind, WorldScene};
use thiserror::Error;

use crate::runner::RunOutput;
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("no trace records to render")]
    EmptyTrace,
    #[error("frame i/o failure at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

const SCALE: f64 = 4.0; // px per metre
const MARGIN: f64 = 10.0; // metres of padding around the content

struct Viewport {
    min_x: f64,
    max_y: f64,
    width: f64,
    height: f64,
}

impl Viewport {
    fn from_world(w: &WorldScene) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        let mut take = |p: [f64; 2]| {
            for k in 0..2 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        };
        for line in &w.map.lane_lines {
            for &p in &line.points {
                take(p);
            }
        }
        for zone in &w.map.stop_zones {
            take([zone.center[0] - zone.half_extents[0], zone.center[1] - zone.half_extents[1]]);
            take([zone.center[0] + zone.half_extents[0], zone.center[1] + zone.half_extents[1]]);
        }
        for track in &w.non_ego {
            for s in &track.states {
                take(s.position);
            }
        }
        Self {
            min_x: min[0] - MARGIN,
            max_y: max[1] + MARGIN,
            width: (max[0] - min[0] + 2.0 * MARGIN) * SCALE,
            height: (max[1] - min[1] + 2.0 * MARGIN) * SCALE,
        }
    }

    fn x(&self, wx: f64) -> f64 {
        (wx - self.min_x) * SCALE
    }

    fn y(&self, wy: f64) -> f64 {
        (self.max_y - wy) * SCALE
    }
}

fn polyline(vp: &Viewport, points: impl Iterator<Item = [f64; 2]>) -> String {
    points
        .map(|p| format!("{:.2},{:.2}", vp.x(p[0]), vp.y(p[1])))
        .collect::<Vec<_>>()
        .join(" ")
}

fn rotated_rect(
    vp: &Viewport,
    center: [f64; 2],
    half: [f64; 2],
    heading: f64,
    style: &str,
) -> String {
    let (c, s) = (heading.cos(), heading.sin());
    let corners = [
        [half[0], half[1]],
        [-half[0], half[1]],
        [-half[0], -half[1]],
        [half[0], -half[1]],
    ]
    .map(|[dx, dy]| [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy]);
    format!(
        "<polygon points=\"{}\" {style}/>",
        polyline(vp, corners.into_iter())
    )
}

fn render_frame(scenario: &Scenario, output: &RunOutput, world: &WorldScene, cycle: usize) -> String {
    let vp = Viewport::from_world(world);
    let record = &output.trace[cycle];
    let step = cycle * scenario.planner.execute_steps;
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" \
         viewBox=\"0 0 {:.0} {:.0}\">\n",
        vp.width, vp.height, vp.width, vp.height
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"#f4f4f0\"/>");

    for line in &world.map.lane_lines {
        let dash = match line.kind {
            LineKind::Solid => "",
            LineKind::Dashed => " stroke-dasharray=\"12,10\"",
        };
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#999\" stroke-width=\"2\"{dash}/>",
            polyline(&vp, line.points.iter().copied())
        );
    }
    for zone in &world.map.stop_zones {
        let _ = writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"red\" fill-opacity=\"0.25\"/>",
            vp.x(zone.center[0] - zone.half_extents[0]),
            vp.y(zone.center[1] + zone.half_extents[1]),
            2.0 * zone.half_extents[0] * SCALE,
            2.0 * zone.half_extents[1] * SCALE
        );
    }
    for (track, agent) in world.non_ego.iter().zip(&scenario.agents) {
        let s = &track.states[step.min(track.states.len() - 1)];
        let _ = writeln!(
            svg,
            "{}",
            rotated_rect(
                &vp,
                s.position,
                track.half_extents,
                s.heading,
                &format!("fill=\"{}\" fill-opacity=\"0.35\" stroke=\"#555\"", agent_color(&agent.name)),
            )
        );
    }

    // Executed path so far, then the plan from this cycle.
    let executed = output.executed_states[..=step].iter().map(|s| [s.px, s.py]);
    let _ = writeln!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#c90\" stroke-width=\"2\"/>",
        polyline(&vp, executed)
    );
    if let Some(plan) = output.planned_paths.get(cycle) {
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#09c\" stroke-width=\"2\" \
             stroke-dasharray=\"4,4\"/>",
            polyline(&vp, plan.iter().copied())
        );
    }

    // Ego glyph: a circle at the recorded state plus a heading tick.
    let (ex, ey) = (vp.x(record.ego.px), vp.y(record.ego.py));
    let _ = writeln!(
        svg,
        "<circle id=\"ego\" cx=\"{ex:.2}\" cy=\"{ey:.2}\" r=\"5\" fill=\"gold\" stroke=\"#333\"/>"
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ex:.2}\" y1=\"{ey:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>",
        ex + 10.0 * record.ego.psi.cos(),
        ey - 10.0 * record.ego.psi.sin()
    );
    svg.push_str("</svg>\n");
    svg
}

fn agent_color(name: &str) -> &str {
    match name {
        "blue" => "#3366cc",
        "orange" => "#e07820",
        _ => "#888888",
    }
}

/// Writes `cycle_NNNN.svg` for every cycle in the trace. Returns the file
/// paths in cycle order.
pub fn emit_frames(
    scenario: &Scenario,
    output: &RunOutput,
    dir: &str,
) -> Result<Vec<String>, FrameError> {
    if output.trace.is_empty() {
        return Err(FrameError::EmptyTrace);
    }
    let io_err = |path: &str, source: std::io::Error| FrameError::Io {
        path: path.to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let cfg = &scenario.planner;
    let world = scenario.world(scenario.cycles * cfg.execute_steps + cfg.horizon + 1);
    let mut paths = Vec::with_capacity(output.trace.len());
    for cycle in 0..output.trace.len() {
        let path = format!("{dir}/cycle_{cycle:04}.svg");
        let svg = render_frame(scenario, output, &world, cycle);
        std::fs::write(&path, svg).map_err(|e| io_err(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
