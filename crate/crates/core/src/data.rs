//! Synthetic scene generation, scenario persistence, and dataset splitting.
//!
//! Scenes are built from straight and circular-arc lane paths. Agents move
//! along a lane path at constant speed, so the labelled future is an exact
//! closed-form continuation of the past — a kinematic oracle that downstream
//! metrics and smoke tests can rely on.
//!
//! Scenario files are newline-delimited JSON records, one scene per line, with
//! an explicit schema version field (`"v1"`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{
    AgentKind, AgentState, AgentTrack, MapPolyline, PolylineKind, RoadScene, SceneError, Vec2,
};

pub const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("record at line {line} has schema version {found:?}, expected {expected:?}")]
    VersionMismatch { line: usize, found: String, expected: String },
    #[error("invalid scene at line {line}: {source}")]
    InvalidScene {
        line: usize,
        #[source]
        source: SceneError,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Fraction of the labelled data used for training, plus the subsampling seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DatasetSplitConfig {
    pub fraction: f64,
    pub seed: u64,
}

impl DatasetSplitConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(DataError::InvalidConfig(format!(
                "fraction must be in (0, 1], got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// Geometry and population parameters for the synthetic generator.
/// Ranges are inclusive at both ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub lane_count: (usize, usize),
    /// Probability that a lane is a circular arc rather than a straight.
    pub arc_probability: f64,
    pub arc_radius_m: (f64, f64),
    pub lane_length_m: (f64, f64),
    /// Spacing of sampled polyline points along each lane, meters.
    pub point_spacing_m: f64,
    pub agent_count: (usize, usize),
    pub vehicle_speed_mps: (f64, f64),
    pub pedestrian_speed_mps: (f64, f64),
    pub cyclist_speed_mps: (f64, f64),
    /// Sampling weights for vehicle : pedestrian : cyclist.
    pub kind_weights: [f64; 3],
    pub past_steps: usize,
    pub future_steps: usize,
    pub frequency_hz: f64,
    /// Also emit road edges, crosswalks and stop lines.
    pub road_furniture: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            lane_count: (3, 5),
            arc_probability: 0.5,
            arc_radius_m: (15.0, 60.0),
            lane_length_m: (60.0, 120.0),
            point_spacing_m: 4.0,
            agent_count: (2, 5),
            vehicle_speed_mps: (3.0, 9.0),
            pedestrian_speed_mps: (0.5, 1.8),
            cyclist_speed_mps: (2.0, 6.0),
            kind_weights: [0.7, 0.2, 0.1],
            past_steps: 10,
            future_steps: 50,
            frequency_hz: 10.0,
            road_furniture: true,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo;
        if self.lane_count.0 == 0 || self.lane_count.1 < self.lane_count.0 {
            return Err(DataError::InvalidConfig("lane_count range is degenerate".into()));
        }
        if !(0.0..=1.0).contains(&self.arc_probability) {
            return Err(DataError::InvalidConfig("arc_probability must be in [0, 1]".into()));
        }
        if !range_ok(self.arc_radius_m) || !range_ok(self.lane_length_m) {
            return Err(DataError::InvalidConfig("lane geometry ranges are degenerate".into()));
        }
        if self.point_spacing_m <= 0.0 {
            return Err(DataError::InvalidConfig("point_spacing_m must be positive".into()));
        }
        if self.agent_count.0 == 0 || self.agent_count.1 < self.agent_count.0 {
            return Err(DataError::InvalidConfig("agent_count range is degenerate".into()));
        }
        if !range_ok(self.vehicle_speed_mps)
            || !range_ok(self.pedestrian_speed_mps)
            || !range_ok(self.cyclist_speed_mps)
        {
            return Err(DataError::InvalidConfig("speed ranges are degenerate".into()));
        }
        if self.kind_weights.iter().any(|&w| w < 0.0) || self.kind_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(DataError::InvalidConfig("kind_weights must be nonnegative, not all zero".into()));
        }
        if self.past_steps == 0 || self.future_steps == 0 {
            return Err(DataError::InvalidConfig("past_steps and future_steps must be >= 1".into()));
        }
        if self.frequency_hz <= 0.0 {
            return Err(DataError::InvalidConfig("frequency_hz must be positive".into()));
        }
        Ok(())
    }
}

/// Constant-speed motion along a lane path, parameterized by arclength.
/// Both variants extend beyond the sampled polyline, so the analytic
/// continuation is defined for every future step.
#[derive(Debug, Clone, Copy)]
enum LanePath {
    Straight { start: Vec2, dir: Vec2, len: f64 },
    /// `signed_radius` > 0 turns counter-clockwise, < 0 clockwise.
    Arc { center: Vec2, radius: f64, start_angle: f64, turn_sign: f64, len: f64 },
}

impl LanePath {
    fn len(&self) -> f64 {
        match self {
            LanePath::Straight { len, .. } | LanePath::Arc { len, .. } => *len,
        }
    }

    fn point_at(&self, s: f64) -> Vec2 {
        match *self {
            LanePath::Straight { start, dir, .. } => {
                Vec2::new(start.x + dir.x * s, start.y + dir.y * s)
            }
            LanePath::Arc { center, radius, start_angle, turn_sign, .. } => {
                let angle = start_angle + turn_sign * s / radius;
                Vec2::new(center.x + radius * angle.cos(), center.y + radius * angle.sin())
            }
        }
    }

    fn heading_at(&self, s: f64) -> f64 {
        match *self {
            LanePath::Straight { dir, .. } => dir.y.atan2(dir.x),
            LanePath::Arc { radius, start_angle, turn_sign, .. } => {
                let angle = start_angle + turn_sign * s / radius;
                angle + turn_sign * std::f64::consts::FRAC_PI_2
            }
        }
    }

    /// Parallel offset curve (positive = left of travel direction).
    fn offset(&self, d: f64) -> LanePath {
        match *self {
            LanePath::Straight { start, dir, len } => {
                let normal = Vec2::new(-dir.y, dir.x);
                LanePath::Straight {
                    start: Vec2::new(start.x + normal.x * d, start.y + normal.y * d),
                    dir,
                    len,
                }
            }
            LanePath::Arc { center, radius, start_angle, turn_sign, len } => {
                // Left of travel is radially inward for CCW, outward for CW.
                let new_radius = (radius - turn_sign * d).max(1.0);
                LanePath::Arc {
                    center,
                    radius: new_radius,
                    start_angle,
                    turn_sign,
                    len: len * new_radius / radius,
                }
            }
        }
    }

    fn sample_polyline(&self, spacing: f64) -> Vec<Vec2> {
        let len = self.len();
        let n = (len / spacing).ceil() as usize;
        let mut pts = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let s = (i as f64 * spacing).min(len);
            pts.push(self.point_at(s));
        }
        pts.dedup_by(|a, b| a == b);
        pts
    }
}

fn sample_range(rng: &mut ChaCha20Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn sample_kind(rng: &mut ChaCha20Rng, weights: &[f64; 3]) -> AgentKind {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen_range(0.0..total);
    for (kind, &w) in AgentKind::ALL.iter().zip(weights) {
        if u < w {
            return *kind;
        }
        u -= w;
    }
    AgentKind::Vehicle
}

/// Generate one scene. Agents follow lane centerlines at constant speed and
/// `future_truth` holds the exact analytic continuation for every track.
/// The ego agent is drawn uniformly among the vehicles.
pub fn generate_synthetic_scene(config: &SyntheticConfig, seed: u64) -> Result<RoadScene, DataError> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let n_lanes = rng.gen_range(config.lane_count.0..=config.lane_count.1);
    let mut paths = Vec::with_capacity(n_lanes);
    for _ in 0..n_lanes {
        let len = sample_range(&mut rng, config.lane_length_m);
        let anchor = Vec2::new(rng.gen_range(-35.0..35.0), rng.gen_range(-35.0..35.0));
        let heading = rng.gen_range(0.0..std::f64::consts::TAU);
        let is_arc = rng.gen::<f64>() < config.arc_probability;
        if is_arc {
            let radius = sample_range(&mut rng, config.arc_radius_m);
            let turn_sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            // Place the center so the path starts at `anchor` moving along
            // `heading`: the center sits perpendicular to the left (CCW) or
            // right (CW) of the start point.
            let to_center = heading + turn_sign * std::f64::consts::FRAC_PI_2;
            let center = Vec2::new(
                anchor.x + radius * to_center.cos(),
                anchor.y + radius * to_center.sin(),
            );
            let start_angle = (anchor.y - center.y).atan2(anchor.x - center.x);
            paths.push(LanePath::Arc { center, radius, start_angle, turn_sign, len });
        } else {
            let dir = Vec2::new(heading.cos(), heading.sin());
            paths.push(LanePath::Straight { start: anchor, dir, len });
        }
    }

    let mut polylines = Vec::new();
    let mut next_polyline_id = 0u64;
    let mut push_polyline = |polylines: &mut Vec<MapPolyline>, kind, points: Vec<Vec2>| {
        if points.len() >= 2 {
            polylines.push(MapPolyline { id: next_polyline_id, kind, points });
            next_polyline_id += 1;
        }
    };

    for path in &paths {
        push_polyline(
            &mut polylines,
            PolylineKind::LaneCenter,
            path.sample_polyline(config.point_spacing_m),
        );
    }
    if config.road_furniture {
        for path in &paths {
            if rng.gen::<f64>() < 0.5 {
                let side = if rng.gen::<bool>() { 3.5 } else { -3.5 };
                push_polyline(
                    &mut polylines,
                    PolylineKind::RoadEdge,
                    path.offset(side).sample_polyline(config.point_spacing_m),
                );
            }
            if rng.gen::<f64>() < 0.3 {
                // Short segment crossing the lane.
                let s = rng.gen_range(0.2..0.8) * path.len();
                let p = path.point_at(s);
                let h = path.heading_at(s) + std::f64::consts::FRAC_PI_2;
                let half = Vec2::new(3.0 * h.cos(), 3.0 * h.sin());
                push_polyline(
                    &mut polylines,
                    PolylineKind::Crosswalk,
                    vec![p.sub(half), p.add(half)],
                );
            }
            if rng.gen::<f64>() < 0.2 {
                let s = rng.gen_range(0.2..0.8) * path.len();
                let p = path.point_at(s);
                let h = path.heading_at(s) + std::f64::consts::FRAC_PI_2;
                let half = Vec2::new(1.8 * h.cos(), 1.8 * h.sin());
                push_polyline(
                    &mut polylines,
                    PolylineKind::StopLine,
                    vec![p.sub(half), p.add(half)],
                );
            }
        }
    }

    let n_agents = rng.gen_range(config.agent_count.0..=config.agent_count.1);
    let prediction_start = (config.past_steps - 1) as i64;
    let dt = 1.0 / config.frequency_hz;

    let mut tracks = Vec::with_capacity(n_agents);
    let mut future_truth = BTreeMap::new();
    let mut vehicle_ids = Vec::new();
    for agent_idx in 0..n_agents {
        // The first agent is always a vehicle so an ego candidate exists.
        let kind = if agent_idx == 0 { AgentKind::Vehicle } else { sample_kind(&mut rng, &config.kind_weights) };
        let speed = match kind {
            AgentKind::Vehicle => sample_range(&mut rng, config.vehicle_speed_mps),
            AgentKind::Pedestrian => sample_range(&mut rng, config.pedestrian_speed_mps),
            AgentKind::Cyclist => sample_range(&mut rng, config.cyclist_speed_mps),
        };
        let path = paths[rng.gen_range(0..paths.len())];
        let s0 = rng.gen_range(0.2..0.8) * path.len();

        let id = agent_idx as u64;
        if kind == AgentKind::Vehicle {
            vehicle_ids.push(id);
        }
        let states = (0..config.past_steps)
            .map(|i| {
                let t = (i as i64 - prediction_start) as f64 * dt;
                let s = s0 + speed * t;
                let p = path.point_at(s);
                AgentState { step: i as i64, x: p.x, y: p.y, heading: path.heading_at(s), valid: true }
            })
            .collect();
        let future: Vec<Vec2> = (1..=config.future_steps)
            .map(|i| path.point_at(s0 + speed * (i as f64 * dt)))
            .collect();
        future_truth.insert(id, future);
        tracks.push(AgentTrack { id, kind, states });
    }

    let ego_id = vehicle_ids[rng.gen_range(0..vehicle_ids.len())];

    let scene = RoadScene {
        id: format!("syn-{seed:016x}"),
        frequency_hz: config.frequency_hz,
        prediction_start,
        ego_id,
        polylines,
        tracks,
        future_truth: Some(future_truth),
    };
    debug_assert!(scene.validate().is_ok());
    Ok(scene)
}

/// Whether a scene carries no agent data beyond the stationary ego anchor
/// that [`strip_agents`] leaves behind.
pub fn is_map_only(scene: &RoadScene) -> bool {
    scene.future_truth.is_none()
        && scene.tracks.len() == 1
        && scene.tracks[0].id == scene.ego_id
        && scene.tracks[0].states.iter().all(|s| s.x == 0.0 && s.y == 0.0 && s.heading == 0.0)
}

/// Remove all agent data. A stationary ego anchor at the origin is kept so the
/// scene still defines a frame; polylines are untouched. Idempotent.
pub fn strip_agents(scene: &RoadScene) -> RoadScene {
    let kind = scene.track(scene.ego_id).map(|t| t.kind).unwrap_or(AgentKind::Vehicle);
    let anchor = AgentTrack {
        id: scene.ego_id,
        kind,
        states: (0..=scene.prediction_start.max(0))
            .map(|step| AgentState { step, x: 0.0, y: 0.0, heading: 0.0, valid: true })
            .collect(),
    };
    RoadScene {
        id: scene.id.clone(),
        frequency_hz: scene.frequency_hz,
        prediction_start: scene.prediction_start,
        ego_id: scene.ego_id,
        polylines: scene.polylines.clone(),
        tracks: vec![anchor],
        future_truth: None,
    }
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    version: String,
    #[serde(flatten)]
    scene: RoadScene,
}

/// Write scenes as newline-delimited JSON records.
pub fn save_scenarios(scenes: &[RoadScene], path: &Path) -> Result<(), DataError> {
    let io_err = |source| DataError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for scene in scenes {
        let record = SceneRecord { version: SCHEMA_VERSION.to_string(), scene: scene.clone() };
        let line = serde_json::to_string(&record)
            .map_err(|e| DataError::Malformed { line: 0, reason: e.to_string() })?;
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Load scenes, preserving order. Errors name the offending record line.
pub fn load_scenarios(path: &Path) -> Result<Vec<RoadScene>, DataError> {
    let io_err = |source| DataError::Io { path: path.display().to_string(), source };
    let file = File::open(path).map_err(io_err)?;
    let reader = BufReader::new(file);
    let mut scenes = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SceneRecord = serde_json::from_str(&line)
            .map_err(|e| DataError::Malformed { line: line_no, reason: e.to_string() })?;
        if record.version != SCHEMA_VERSION {
            return Err(DataError::VersionMismatch {
                line: line_no,
                found: record.version,
                expected: SCHEMA_VERSION.to_string(),
            });
        }
        record
            .scene
            .validate()
            .map_err(|source| DataError::InvalidScene { line: line_no, source })?;
        scenes.push(record.scene);
    }
    Ok(scenes)
}

/// Seeded uniform subsample: `train` gets `round(fraction * N)` scenes, the
/// rest go to `holdout`. Both halves keep the input order.
pub fn split_dataset(
    scenes: Vec<RoadScene>,
    config: &DatasetSplitConfig,
) -> Result<(Vec<RoadScene>, Vec<RoadScene>), DataError> {
    config.validate()?;
    if scenes.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let n = scenes.len();
    let k = ((config.fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut selected = vec![false; n];
    for &i in indices.iter().take(k) {
        selected[i] = true;
    }
    let mut train = Vec::with_capacity(k);
    let mut holdout = Vec::with_capacity(n - k);
    for (i, scene) in scenes.into_iter().enumerate() {
        if selected[i] {
            train.push(scene);
        } else {
            holdout.push(scene);
        }
    }
    Ok((train, holdout))
}
