//! Static map, non-ego agent tracks, and the geometric queries behind the
//! rule predicates.
//!
//! All queries are pure and the scene is immutable after construction, so
//! planner branches can evaluate them concurrently. Queries that feed
//! gradients are generic over [`Scalar`], with map geometry held as plain
//! constants; discrete choices (nearest segment, nearest lane point) are
//! made on values and the returned margin is differentiable through the
//! selected element.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{MinMaxMode, Scalar};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("empty track")]
    EmptyTrack,
    #[error("time index {t} out of range for track of length {len}")]
    TimeOutOfRange { t: usize, len: usize },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Solid,
    Dashed,
}

/// A lane line as an ordered polyline; the point order fixes the line
/// direction and therefore the satisfied side of the crossing rules
/// (positive offsets are to the left of the direction of travel).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaneLine {
    pub points: Vec<[f64; 2]>,
    pub kind: LineKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lane {
    pub center: Vec<[f64; 2]>,
    /// Lane heading (rad) per center point, in `(-pi, pi]`.
    pub headings: Vec<f64>,
}

/// Axis-aligned rectangle marking where the stop-sign dwell must happen.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StopZone {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapModel {
    pub lane_lines: Vec<LaneLine>,
    pub lanes: Vec<Lane>,
    pub stop_zones: Vec<StopZone>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: [f64; 2],
    pub heading: f64,
    pub speed: f64,
}

/// A non-ego agent's motion over the horizon plus its keep-out footprint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonEgoTrack {
    pub states: Vec<AgentState>,
    /// Keep-out rectangle half-extents (m); a 10 m x 4 m zone is
    /// `(5, 2)`.
    pub half_extents: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldScene {
    pub map: MapModel,
    pub non_ego: Vec<NonEgoTrack>,
    /// Shared simulation timestep (s).
    pub dt: f64,
    /// Keep-out rectangles are normally expressed in the non-ego body frame
    /// and rotate with its heading; set this to pin them to the inertial
    /// axes instead.
    #[serde(default)]
    pub keepout_axis_aligned: bool,
}

impl WorldScene {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.dt <= 0.0 {
            return Err(WorldError::InvalidScene(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        for line in &self.map.lane_lines {
            if line.points.len() < 2 {
                return Err(WorldError::InvalidScene(
                    "lane line polyline needs at least 2 points".into(),
                ));
            }
        }
        for lane in &self.map.lanes {
            if lane.center.len() < 2 {
                return Err(WorldError::InvalidScene(
                    "lane center polyline needs at least 2 points".into(),
                ));
            }
            if lane.center.len() != lane.headings.len() {
                return Err(WorldError::InvalidScene(
                    "lane heading profile length must match center polyline".into(),
                ));
            }
        }
        for zone in &self.map.stop_zones {
            if zone.half_extents[0] <= 0.0 || zone.half_extents[1] <= 0.0 {
                return Err(WorldError::InvalidScene(
                    "stop zone half-extents must be positive".into(),
                ));
            }
        }
        for track in &self.non_ego {
            if track.states.is_empty() {
                return Err(WorldError::EmptyTrack);
            }
            if track.half_extents[0] <= 0.0 || track.half_extents[1] <= 0.0 {
                return Err(WorldError::InvalidScene(
                    "non-ego footprint half-extents must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Extends a track to at least `horizon_steps` states by constant-speed,
/// constant-heading extrapolation of the final state. Idempotent once the
/// track is long enough.
pub fn extend_track(
    track: &NonEgoTrack,
    horizon_steps: usize,
    dt: f64,
) -> Result<NonEgoTrack, WorldError> {
    let last = *track.states.last().ok_or(WorldError::EmptyTrack)?;
    let mut states = track.states.clone();
    while states.len() < horizon_steps {
        let prev = *states.last().unwrap();
        states.push(AgentState {
            position: [
                prev.position[0] + prev.speed * prev.heading.cos() * dt,
                prev.position[1] + prev.speed * prev.heading.sin() * dt,
            ],
            heading: last.heading,
            speed: last.speed,
        });
    }
    Ok(NonEgoTrack {
        states,
        half_extents: track.half_extents,
    })
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Squared distance from a point to a segment, clamping the projection to
/// the segment. Used only to select the nearest segment.
fn point_segment_dist_sq(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = sub(b, a);
    let len_sq = d[0] * d[0] + d[1] * d[1];
    let t = if len_sq > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    let r = sub(p, q);
    r[0] * r[0] + r[1] * r[1]
}

/// Signed perpendicular distance from a point to the nearest segment of a
/// polyline; positive to the left of the segment direction.
pub fn signed_lateral_offset<S: Scalar>(px: &S, py: &S, polyline: &[[f64; 2]]) -> S {
    assert!(polyline.len() >= 2, "polyline needs at least 2 points");
    let p = [px.value(), py.value()];
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..polyline.len() - 1 {
        let d = point_segment_dist_sq(p, polyline[i], polyline[i + 1]);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    let a = polyline[best];
    let b = polyline[best + 1];
    let d = sub(b, a);
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    // cross(d, p - a) / |d|
    (px.shift(-a[0]).scale(-d[1]) + py.shift(-a[1]).scale(d[0])).scale(1.0 / len)
}

/// Body-frame l-infinity margin of a point against a rotated rectangle:
/// positive outside (distance along the most-separating axis), negative
/// inside (penetration depth).
pub fn rect_margin<S: Scalar>(
    px: &S,
    py: &S,
    center: [f64; 2],
    heading: f64,
    half_extents: [f64; 2],
    mode: MinMaxMode,
) -> S {
    let (sin, cos) = heading.sin_cos();
    let dx = px.shift(-center[0]);
    let dy = py.shift(-center[1]);
    let along = dx.scale(cos) + dy.scale(sin);
    let across = dx.scale(-sin) + dy.scale(cos);
    let margins = [
        along.abs().shift(-half_extents[0]),
        across.abs().shift(-half_extents[1]),
    ];
    S::reduce_max(&margins, mode)
}

/// Signed margin of the ego position against the keep-out rectangle of a
/// non-ego track at step `t`.
pub fn occupancy_margin(
    ego_position: [f64; 2],
    track: &NonEgoTrack,
    t: usize,
    axis_aligned: bool,
) -> Result<f64, WorldError> {
    let state = track.states.get(t).ok_or(WorldError::TimeOutOfRange {
        t,
        len: track.states.len(),
    })?;
    let heading = if axis_aligned { 0.0 } else { state.heading };
    Ok(rect_margin(
        &ego_position[0],
        &ego_position[1],
        state.position,
        heading,
        track.half_extents,
        MinMaxMode::Hard,
    ))
}

/// Same margin through a generic scalar, clamping `t` to the final scripted
/// state; predicates call this after tracks were extended past the horizon.
pub fn occupancy_margin_at<S: Scalar>(
    px: &S,
    py: &S,
    track: &NonEgoTrack,
    t: usize,
    axis_aligned: bool,
    mode: MinMaxMode,
) -> S {
    let idx = t.min(track.states.len() - 1);
    let state = &track.states[idx];
    let heading = if axis_aligned { 0.0 } else { state.heading };
    rect_margin(px, py, state.position, heading, track.half_extents, mode)
}

/// Margin of a point against a stop zone: positive inside, negative outside.
pub fn stop_zone_margin<S: Scalar>(px: &S, py: &S, zone: &StopZone, mode: MinMaxMode) -> S {
    let margins = [
        (-px.shift(-zone.center[0]).abs()).shift(zone.half_extents[0]),
        (-py.shift(-zone.center[1]).abs()).shift(zone.half_extents[1]),
    ];
    S::reduce_min(&margins, mode)
}

/// Heading of the lane-center point nearest to a position, searched across
/// all lanes; first match wins ties.
pub fn nearest_lane_heading(map: &MapModel, position: [f64; 2]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for lane in &map.lanes {
        for (point, &heading) in lane.center.iter().zip(&lane.headings) {
            let d = sub(position, *point);
            let dist = d[0] * d[0] + d[1] * d[1];
            if best.map_or(true, |(bd, _)| dist < bd) {
                best = Some((dist, heading));
            }
        }
    }
    best.map(|(_, h)| h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn straight_track(x: f64, y: f64, heading: f64, speed: f64) -> NonEgoTrack {
        NonEgoTrack {
            states: vec![AgentState {
                position: [x, y],
                heading,
                speed,
            }],
            half_extents: [5.0, 2.0],
        }
    }

    #[test]
    fn extend_stationary_track() {
        let track = straight_track(50.0, 0.0, 0.0, 0.0);
        let out = extend_track(&track, 10, 0.2).unwrap();
        assert_eq!(out.states.len(), 10);
        for s in &out.states {
            assert_eq!(s.position, [50.0, 0.0]);
        }
    }

    #[test]
    fn extend_uniform_motion() {
        let track = straight_track(0.0, 0.0, 0.0, 10.0);
        let out = extend_track(&track, 3, 0.2).unwrap();
        assert!((out.states[1].position[0] - 2.0).abs() < 1e-12);
        assert!((out.states[2].position[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn extend_preserves_prefix_and_is_idempotent() {
        let mut track = straight_track(0.0, 0.0, 0.5, 3.0);
        for _ in 0..4 {
            let last = *track.states.last().unwrap();
            track.states.push(AgentState {
                position: [last.position[0] + 1.0, last.position[1]],
                ..last
            });
        }
        let prefix = track.states.clone();
        let out = extend_track(&track, 10, 0.2).unwrap();
        assert_eq!(out.states[..5], prefix[..]);
        let again = extend_track(&out, 10, 0.2).unwrap();
        assert_eq!(again.states.len(), out.states.len());
    }

    #[test]
    fn extend_empty_track_errors() {
        let track = NonEgoTrack {
            states: vec![],
            half_extents: [5.0, 2.0],
        };
        assert!(matches!(
            extend_track(&track, 5, 0.2),
            Err(WorldError::EmptyTrack)
        ));
    }

    #[test]
    fn lateral_offset_signs() {
        // Horizontal line y = -2 running in +x.
        let line = [[-10.0, -2.0], [10.0, -2.0]];
        let zero = signed_lateral_offset(&0.0, &-2.0, &line);
        assert!(zero.abs() < 1e-12);
        let above = signed_lateral_offset(&0.0, &0.0, &line);
        assert!((above - 2.0).abs() < 1e-12);
        let below = signed_lateral_offset(&0.0, &-3.0, &line);
        assert!((below + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lateral_offset_sign_flips_only_across_the_line() {
        let line = [[0.0, 1.0], [5.0, 1.0], [20.0, 1.0]];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let x: f64 = rng.gen_range(0.0..20.0);
            let y: f64 = rng.gen_range(-5.0..5.0);
            let off = signed_lateral_offset(&x, &y, &line);
            assert_eq!(off > 0.0, y > 1.0, "at ({x},{y}) offset {off}");
        }
    }

    #[test]
    fn occupancy_margin_hand_geometry() {
        let track = straight_track(0.0, 0.0, 0.0, 0.0);
        // Center: deepest penetration along the short axis.
        let m = occupancy_margin([0.0, 0.0], &track, 0, false).unwrap();
        assert!((m + 2.0).abs() < 1e-12);
        // 8 m ahead: 8 - 5 = 3.
        let m = occupancy_margin([8.0, 0.0], &track, 0, false).unwrap();
        assert!((m - 3.0).abs() < 1e-12);
        // Corner is the boundary.
        let m = occupancy_margin([5.0, 2.0], &track, 0, false).unwrap();
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn occupancy_margin_rotates_with_body_frame() {
        let track = straight_track(0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        // Facing +y: the long axis is now vertical.
        let m = occupancy_margin([3.0, 0.0], &track, 0, false).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let m_aligned = occupancy_margin([3.0, 0.0], &track, 0, true).unwrap();
        assert!((m_aligned + 2.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_margin_time_bounds() {
        let track = straight_track(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            occupancy_margin([0.0, 0.0], &track, 3, false),
            Err(WorldError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn occupancy_margin_is_lipschitz() {
        // Margin moves at most 1 per unit of axis-aligned motion in the
        // body frame, hence sqrt(2)-Lipschitz in the plane.
        let track = straight_track(1.0, -0.5, 0.7, 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        for _ in 0..2000 {
            let p = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let step = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
            let q = [p[0] + step[0], p[1] + step[1]];
            let a = occupancy_margin(p, &track, 0, false).unwrap();
            let b = occupancy_margin(q, &track, 0, false).unwrap();
            let dist = (step[0] * step[0] + step[1] * step[1]).sqrt();
            assert!((a - b).abs() <= std::f64::consts::SQRT_2 * dist + 1e-12);
        }
    }

    #[test]
    fn stop_zone_margin_signs() {
        let zone = StopZone {
            center: [10.0, 0.0],
            half_extents: [2.0, 2.0],
        };
        let inside = stop_zone_margin(&10.0, &0.0, &zone, MinMaxMode::Hard);
        assert!((inside - 2.0).abs() < 1e-12);
        let outside = stop_zone_margin(&14.0, &0.0, &zone, MinMaxMode::Hard);
        assert!((outside + 2.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_lane_heading_picks_closest_point() {
        let map = MapModel {
            lane_lines: vec![],
            lanes: vec![
                Lane {
                    center: vec![[0.0, 0.0], [100.0, 0.0]],
                    headings: vec![0.0, 0.0],
                },
                Lane {
                    center: vec![[0.0, 4.0], [100.0, 4.0]],
                    headings: vec![0.1, 0.1],
                },
            ],
            stop_zones: vec![],
        };
        assert_eq!(nearest_lane_heading(&map, [50.0, 1.0]), Some(0.0));
        assert_eq!(nearest_lane_heading(&map, [50.0, 3.5]), Some(0.1));
    }
}
