//! Traffic scene representation and ego-centered local road graph extraction.
//!
//! A [`RoadScene`] holds map polylines and timestamped agent tracks in an
//! arbitrary world frame. Prediction always happens in the frame of one agent:
//! [`RoadScene::to_ego_frame`] re-centers the scene on that agent (translation
//! plus rotation so the agent heading points along +x), and
//! [`RoadScene::extract_local_graph`] keeps only the map and agent content
//! within fixed radii around the origin.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lane points farther than this from the ego agent are dropped.
pub const LANE_RADIUS_M: f64 = 50.0;
/// Agents farther than this from the ego agent are dropped.
pub const AGENT_RADIUS_M: f64 = 25.0;
/// Tolerance for "ego sits at the origin" checks.
pub const EGO_ORIGIN_TOL_M: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown agent id {0}")]
    UnknownAgent(u64),
    #[error("agent {id} has no valid state at step {step}")]
    NoValidState { id: u64, step: i64 },
    #[error("scene is not in the ego frame: ego sits {offset} m from the origin")]
    NotEgoFrame { offset: f64 },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

/// 2D position or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x + other.x, self.y + other.y)
    }

    /// Rotate counter-clockwise by `angle` radians about the origin.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(self.x * c - self.y * s, self.x * s + self.y * c)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolylineKind {
    LaneCenter,
    RoadEdge,
    Crosswalk,
    StopLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Vehicle, AgentKind::Pedestrian, AgentKind::Cyclist];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Vehicle => "vehicle",
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Cyclist => "cyclist",
        }
    }
}

/// An ordered run of map points of one kind.
///
/// Ingested polylines have at least two points with consecutive points
/// distinct; polylines inside a [`LocalRoadGraph`] are radius-clipped and may
/// have shrunk to a single point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPolyline {
    pub id: u64,
    pub kind: PolylineKind,
    pub points: Vec<Vec2>,
}

impl MapPolyline {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.points.len() < 2 {
            return Err(SceneError::Invalid(format!(
                "polyline {} has {} points, need at least 2",
                self.id,
                self.points.len()
            )));
        }
        for (i, w) in self.points.windows(2).enumerate() {
            if w[0] == w[1] {
                return Err(SceneError::Invalid(format!(
                    "polyline {} repeats point {} at index {}",
                    self.id, w[0].x, i
                )));
            }
        }
        if self.points.iter().any(|p| !p.is_finite()) {
            return Err(SceneError::Invalid(format!("polyline {} has non-finite points", self.id)));
        }
        Ok(())
    }
}

/// One timestamped agent sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub step: i64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub valid: bool,
}

impl AgentState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub id: u64,
    pub kind: AgentKind,
    pub states: Vec<AgentState>,
}

impl AgentTrack {
    /// State at an exact step index, if present.
    pub fn state_at(&self, step: i64) -> Option<&AgentState> {
        self.states.iter().find(|s| s.step == step)
    }

    pub fn valid_state_at(&self, step: i64) -> Option<&AgentState> {
        self.state_at(step).filter(|s| s.valid)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for w in self.states.windows(2) {
            if w[1].step <= w[0].step {
                return Err(SceneError::Invalid(format!(
                    "track {}: step indices not strictly increasing ({} then {})",
                    self.id, w[0].step, w[1].step
                )));
            }
        }
        Ok(())
    }
}

/// A full traffic scene: map polylines plus agent tracks, sampled at
/// `frequency_hz`. `future_truth`, when present, holds the label trajectories
/// (one position per future step) keyed by track id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadScene {
    pub id: String,
    pub frequency_hz: f64,
    pub prediction_start: i64,
    pub ego_id: u64,
    pub polylines: Vec<MapPolyline>,
    pub tracks: Vec<AgentTrack>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub future_truth: Option<BTreeMap<u64, Vec<Vec2>>>,
}

/// Position snapshot of one agent at the prediction start, in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSnapshot {
    pub id: u64,
    pub kind: AgentKind,
    pub position: Vec2,
    pub heading: f64,
}

/// Ego-centered subset of a scene: radius-clipped polylines plus agent
/// snapshots at the prediction start. Input to tokenization.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRoadGraph {
    pub polylines: Vec<MapPolyline>,
    pub agents: Vec<AgentSnapshot>,
    pub ego_id: u64,
}

impl RoadScene {
    pub fn track(&self, id: u64) -> Option<&AgentTrack> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.frequency_hz <= 0.0 {
            return Err(SceneError::Invalid(format!(
                "frequency_hz must be positive, got {}",
                self.frequency_hz
            )));
        }
        if self.track(self.ego_id).is_none() {
            return Err(SceneError::Invalid(format!("ego id {} not among tracks", self.ego_id)));
        }
        for p in &self.polylines {
            p.validate()?;
        }
        for t in &self.tracks {
            t.validate()?;
        }
        if let Some(truth) = &self.future_truth {
            let mut len = None;
            for (id, traj) in truth {
                if self.track(*id).is_none() {
                    return Err(SceneError::Invalid(format!(
                        "future_truth references unknown track {id}"
                    )));
                }
                match len {
                    None => len = Some(traj.len()),
                    Some(l) if l != traj.len() => {
                        return Err(SceneError::Invalid(format!(
                            "future_truth lengths differ: {} vs {}",
                            l,
                            traj.len()
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Number of future steps covered by the labels, if any.
    pub fn future_steps(&self) -> Option<usize> {
        self.future_truth
            .as_ref()
            .and_then(|m| m.values().next().map(|t| t.len()))
    }

    /// Re-express the scene in the frame of `agent_id` at `prediction_start`:
    /// that agent ends up at the origin with heading 0 (+x). A rigid
    /// transform, so all pairwise distances are preserved.
    pub fn to_ego_frame(&self, agent_id: u64) -> Result<RoadScene, SceneError> {
        let track = self
            .track(agent_id)
            .ok_or(SceneError::UnknownAgent(agent_id))?;
        let anchor = track
            .valid_state_at(self.prediction_start)
            .ok_or(SceneError::NoValidState { id: agent_id, step: self.prediction_start })?;
        let origin = anchor.position();
        let theta = anchor.heading;

        let tx = |p: Vec2| p.sub(origin).rotate(-theta);

        let polylines = self
            .polylines
            .iter()
            .map(|pl| MapPolyline {
                id: pl.id,
                kind: pl.kind,
                points: pl.points.iter().map(|&p| tx(p)).collect(),
            })
            .collect();

        let tracks = self
            .tracks
            .iter()
            .map(|t| AgentTrack {
                id: t.id,
                kind: t.kind,
                states: t
                    .states
                    .iter()
                    .map(|s| {
                        let p = tx(s.position());
                        AgentState {
                            step: s.step,
                            x: p.x,
                            y: p.y,
                            heading: s.heading - theta,
                            valid: s.valid,
                        }
                    })
                    .collect(),
            })
            .collect();

        let future_truth = self.future_truth.as_ref().map(|m| {
            m.iter()
                .map(|(&id, traj)| (id, traj.iter().map(|&p| tx(p)).collect()))
                .collect()
        });

        Ok(RoadScene {
            id: self.id.clone(),
            frequency_hz: self.frequency_hz,
            prediction_start: self.prediction_start,
            ego_id: agent_id,
            polylines,
            tracks,
            future_truth,
        })
    }

    /// Keep lane points within [`LANE_RADIUS_M`] (point-wise clip, boundary
    /// inclusive) and agents within [`AGENT_RADIUS_M`] at the prediction
    /// start. The scene must already be in the ego frame; the ego agent is
    /// always retained.
    pub fn extract_local_graph(&self) -> Result<LocalRoadGraph, SceneError> {
        let ego = self
            .track(self.ego_id)
            .ok_or(SceneError::UnknownAgent(self.ego_id))?;
        let ego_state = ego
            .valid_state_at(self.prediction_start)
            .ok_or(SceneError::NoValidState { id: self.ego_id, step: self.prediction_start })?;
        let offset = ego_state.position().norm();
        if offset > EGO_ORIGIN_TOL_M {
            return Err(SceneError::NotEgoFrame { offset });
        }

        let polylines: Vec<MapPolyline> = self
            .polylines
            .iter()
            .filter_map(|pl| {
                let points: Vec<Vec2> =
                    pl.points.iter().copied().filter(|p| p.norm() <= LANE_RADIUS_M).collect();
                if points.is_empty() {
                    None
                } else {
                    Some(MapPolyline { id: pl.id, kind: pl.kind, points })
                }
            })
            .collect();

        let agents = self
            .tracks
            .iter()
            .filter_map(|t| {
                let s = t.valid_state_at(self.prediction_start)?;
                let p = s.position();
                if t.id == self.ego_id || p.norm() <= AGENT_RADIUS_M {
                    Some(AgentSnapshot { id: t.id, kind: t.kind, position: p, heading: s.heading })
                } else {
                    None
                }
            })
            .collect();

        Ok(LocalRoadGraph { polylines, agents, ego_id: self.ego_id })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn simple_scene(ego_pos: Vec2, ego_heading: f64, extra_points: &[Vec2]) -> RoadScene {
        RoadScene {
            id: "t".into(),
            frequency_hz: 10.0,
            prediction_start: 0,
            ego_id: 1,
            polylines: vec![MapPolyline {
                id: 0,
                kind: PolylineKind::LaneCenter,
                points: extra_points.to_vec(),
            }],
            tracks: vec![AgentTrack {
                id: 1,
                kind: AgentKind::Vehicle,
                states: vec![AgentState {
                    step: 0,
                    x: ego_pos.x,
                    y: ego_pos.y,
                    heading: ego_heading,
                    valid: true,
                }],
            }],
            future_truth: None,
        }
    }

    #[test]
    fn ego_frame_identity_when_already_centered() {
        let scene = simple_scene(Vec2::ZERO, 0.0, &[Vec2::new(1.0, 2.0), Vec2::new(3.0, 4.0)]);
        let framed = scene.to_ego_frame(1).unwrap();
        assert_eq!(scene, framed);
    }

    #[test]
    fn ego_frame_pure_translation() {
        let pts = [Vec2::new(1.0, 2.0), Vec2::new(-5.0, 7.0)];
        let scene = simple_scene(Vec2::new(3.0, 4.0), 0.0, &pts);
        let framed = scene.to_ego_frame(1).unwrap();
        for (orig, new) in pts.iter().zip(&framed.polylines[0].points) {
            assert_relative_eq!(new.x, orig.x - 3.0, epsilon = 1e-12);
            assert_relative_eq!(new.y, orig.y - 4.0, epsilon = 1e-12);
        }
        // pairwise distance preserved
        let d0 = pts[0].dist(pts[1]);
        let d1 = framed.polylines[0].points[0].dist(framed.polylines[0].points[1]);
        assert_relative_eq!(d0, d1, epsilon = 1e-12);
    }

    #[test]
    fn ego_frame_rotation_case() {
        // Agent at (1,0) heading pi/2; the point (1,1) lands at (1,0):
        // translate to (0,1), rotate by -pi/2.
        let scene = simple_scene(
            Vec2::new(1.0, 0.0),
            std::f64::consts::FRAC_PI_2,
            &[Vec2::new(1.0, 1.0), Vec2::new(1.0, 2.0)],
        );
        let framed = scene.to_ego_frame(1).unwrap();
        let p = framed.polylines[0].points[0];
        assert_relative_eq!(p.x, 1.0, epsilon = 1e-9);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-9);
        // ego heading aligned with +x
        assert_relative_eq!(framed.tracks[0].states[0].heading, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ego_frame_preserves_pairwise_distances() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let pts: Vec<Vec2> = (0..40)
            .map(|_| Vec2::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)))
            .collect();
        let scene = simple_scene(Vec2::new(12.3, -4.5), 0.77, &pts);
        let framed = scene.to_ego_frame(1).unwrap();
        let new = &framed.polylines[0].points;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                assert!((pts[i].dist(pts[j]) - new[i].dist(new[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ego_frame_unknown_agent_and_invalid_state() {
        let scene = simple_scene(Vec2::ZERO, 0.0, &[Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)]);
        assert!(matches!(scene.to_ego_frame(99), Err(SceneError::UnknownAgent(99))));

        let mut bad = scene.clone();
        bad.tracks[0].states[0].valid = false;
        assert!(matches!(bad.to_ego_frame(1), Err(SceneError::NoValidState { .. })));
    }

    #[test]
    fn local_graph_lane_radius_boundary() {
        let scene = simple_scene(
            Vec2::ZERO,
            0.0,
            &[Vec2::new(49.9, 0.0), Vec2::new(50.1, 0.0)],
        );
        let graph = scene.extract_local_graph().unwrap();
        assert_eq!(graph.polylines[0].points, vec![Vec2::new(49.9, 0.0)]);
    }

    #[test]
    fn local_graph_agent_radius_boundary() {
        let mut scene = simple_scene(Vec2::ZERO, 0.0, &[Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)]);
        for (id, x) in [(2u64, 24.9), (3u64, 25.1)] {
            scene.tracks.push(AgentTrack {
                id,
                kind: AgentKind::Pedestrian,
                states: vec![AgentState { step: 0, x, y: 0.0, heading: 0.0, valid: true }],
            });
        }
        let graph = scene.extract_local_graph().unwrap();
        let ids: Vec<u64> = graph.agents.iter().map(|a| a.id).collect();
        assert!(ids.contains(&1) && ids.contains(&2) && !ids.contains(&3));
    }

    #[test]
    fn local_graph_matches_brute_force_filter() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let pts: Vec<Vec2> = (0..100)
            .map(|_| Vec2::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)))
            .collect();
        let scene = simple_scene(Vec2::ZERO, 0.0, &pts);
        let graph = scene.extract_local_graph().unwrap();
        let expected = pts.iter().filter(|p| p.norm() <= LANE_RADIUS_M).count();
        let kept: usize = graph.polylines.iter().map(|pl| pl.points.len()).sum();
        assert_eq!(kept, expected);
    }

    #[test]
    fn local_graph_requires_ego_frame() {
        let scene = simple_scene(Vec2::new(0.5, 0.0), 0.0, &[Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)]);
        assert!(matches!(scene.extract_local_graph(), Err(SceneError::NotEgoFrame { .. })));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let scene = simple_scene(Vec2::new(3.0, -2.0), 0.4, &[Vec2::new(10.0, 4.0), Vec2::new(20.0, 8.0)]);
        let a = scene.to_ego_frame(1).unwrap().extract_local_graph().unwrap();
        let b = scene.to_ego_frame(1).unwrap().extract_local_graph().unwrap();
        assert_eq!(a, b);
    }
}
