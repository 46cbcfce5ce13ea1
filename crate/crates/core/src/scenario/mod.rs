//! Scene data model: traffic participants, detections, sensing agents and
//! the scenario log that ties them together.

mod generate;
pub mod geometry;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fusion::NoiseProfile;
use crate::{Error, Result, FRAME_DT};

pub use generate::{generate_scenario, lane_capacity};
pub use geometry::{obb_iou, obb_overlap, pseudo_rotate, wrap_angle, Obb, Pose2};

/// Default perception (and V2X communication) radius.
pub const DEFAULT_PERCEPTION_RADIUS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl ObjectClass {
    pub fn default_mass(self) -> f64 {
        match self {
            ObjectClass::Vehicle => 1500.0,
            ObjectClass::Cyclist => 90.0,
            ObjectClass::Pedestrian => 70.0,
        }
    }

    /// (length, width, height) in metres.
    pub fn default_extent(self) -> (f64, f64, f64) {
        match self {
            ObjectClass::Vehicle => (4.5, 1.9, 1.6),
            ObjectClass::Cyclist => (1.8, 0.6, 1.7),
            ObjectClass::Pedestrian => (0.6, 0.6, 1.75),
        }
    }
}

/// Ground-truth kinematic state of a traffic participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: u32,
    pub class: ObjectClass,
    /// Longitudinal position (m).
    pub s: f64,
    /// Lateral position (m).
    pub l: f64,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub mass: f64,
}

impl ObjectState {
    /// A participant of `class` with default extent and mass.
    pub fn new(id: u32, class: ObjectClass, s: f64, l: f64, heading: f64, speed: f64) -> Self {
        let (length, width, height) = class.default_extent();
        Self {
            id,
            class,
            s,
            l,
            heading: wrap_angle(heading),
            speed,
            accel: 0.0,
            length,
            width,
            height,
            mass: class.default_mass(),
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.s, self.l, self.heading)
    }

    pub fn footprint(&self) -> Obb {
        Obb::new(self.s, self.l, self.heading, self.length, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.s, self.l, self.heading, self.speed, self.accel]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid(format!("object {} has non-finite state", self.id)));
        }
        if !(self.length > 0.0 && self.width > 0.0 && self.height > 0.0 && self.mass > 0.0) {
            return Err(Error::Invalid(format!(
                "object {} needs positive extents and mass",
                self.id
            )));
        }
        if self.speed < 0.0 {
            return Err(Error::Invalid(format!("object {} has negative speed", self.id)));
        }
        Ok(())
    }
}

/// A detected traffic participant as reported by one sensing agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    /// Ground-truth id of the object that produced the detection. Only the
    /// simulator knows it; fusion and tracking never read it.
    pub id: u32,
    pub class: ObjectClass,
    pub s: f64,
    pub l: f64,
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub confidence: f64,
    pub source_agent: u32,
    pub timestamp: f64,
}

impl DetectionBox {
    /// A perfect, fully confident detection of `obj`.
    pub fn from_state(obj: &ObjectState, source_agent: u32, timestamp: f64) -> Self {
        Self {
            id: obj.id,
            class: obj.class,
            s: obj.s,
            l: obj.l,
            heading: obj.heading,
            speed: obj.speed,
            length: obj.length,
            width: obj.width,
            height: obj.height,
            confidence: 1.0,
            source_agent,
            timestamp,
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.s, self.l, self.heading)
    }

    pub fn footprint(&self) -> Obb {
        Obb::new(self.s, self.l, self.heading, self.length, self.width)
    }

    pub fn iou(&self, other: &DetectionBox) -> f64 {
        obb_iou(&self.footprint(), &other.footprint())
    }
}

/// Expresses `det` in the frame whose world pose is `target`. Extents,
/// confidence and provenance are unchanged.
pub fn transform_to_frame(det: &DetectionBox, target: Pose2) -> DetectionBox {
    let local = target.to_local(det.pose());
    DetectionBox {
        s: local.x,
        l: local.y,
        heading: local.heading,
        ..*det
    }
}

/// Inverse of [`transform_to_frame`].
pub fn transform_from_frame(det: &DetectionBox, source: Pose2) -> DetectionBox {
    let world = source.to_world(det.pose());
    DetectionBox {
        s: world.x,
        l: world.y,
        heading: world.heading,
        ..*det
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    Crossing,
    Merge,
    Roundabout,
    Straight,
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Template::Crossing => "crossing",
            Template::Merge => "merge",
            Template::Roundabout => "roundabout",
            Template::Straight => "straight",
        })
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crossing" => Ok(Template::Crossing),
            "merge" => Ok(Template::Merge),
            "roundabout" => Ok(Template::Roundabout),
            "straight" => Ok(Template::Straight),
            other => Err(Error::Config(format!("unknown scenario template '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    /// The connected vehicle being planned for. Exactly one per scenario.
    Ego,
    Vehicle,
    Infrastructure,
}

/// A sensing agent that shares its detections over V2X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u32,
    pub kind: AgentKind,
    /// World pose at every frame of the log.
    pub poses: Vec<Pose2>,
    pub perception_radius: f64,
    pub noise: NoiseProfile,
}

/// Physical parameters of the ego vehicle. Its trajectory is the ego agent's
/// pose sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoVehicle {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub mass: f64,
    /// Speed at the current frame (m/s).
    pub speed: f64,
    /// Desired cruise speed v* (m/s).
    pub desired_speed: f64,
}

impl Default for EgoVehicle {
    fn default() -> Self {
        let (length, width, height) = ObjectClass::Vehicle.default_extent();
        Self {
            length,
            width,
            height,
            mass: ObjectClass::Vehicle.default_mass(),
            speed: 10.0,
            desired_speed: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    /// Evaluation range around the ego vehicle.
    pub const EVALUATION: Extent = Extent {
        x_min: -70.4,
        x_max: 70.4,
        y_min: -40.0,
        y_max: 40.0,
    };

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub seed: u64,
    pub template: Option<Template>,
    pub dt: f64,
    /// Number of leading frames forming the observed history; the last of
    /// them is the current frame.
    pub history_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub objects: Vec<ObjectState>,
}

/// Ground truth for all participants plus the sensing agents observing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLog {
    pub meta: ScenarioMeta,
    pub ego: EgoVehicle,
    pub agents: Vec<Agent>,
    /// Static line-of-sight blockers such as buildings.
    #[serde(default)]
    pub occluders: Vec<Obb>,
    pub map_extent: Extent,
    pub frames: Vec<Frame>,
}

impl ScenarioLog {
    pub fn current_frame(&self) -> usize {
        self.meta.history_frames - 1
    }

    pub fn current_time(&self) -> f64 {
        self.frames[self.current_frame()].t
    }

    pub fn future_frames(&self) -> usize {
        self.frames.len() - self.meta.history_frames
    }

    pub fn ego_agent(&self) -> &Agent {
        self.agents
            .iter()
            .find(|a| a.kind == AgentKind::Ego)
            .expect("validated scenario has an ego agent")
    }

    /// Ego world pose at the current frame; the origin of the planning frame.
    pub fn ego_pose(&self) -> Pose2 {
        self.ego_agent().poses[self.current_frame()]
    }

    /// Ego footprint as a participant state at frame `f`.
    pub fn ego_state(&self, f: usize) -> ObjectState {
        let p = self.ego_agent().poses[f];
        ObjectState {
            id: u32::MAX,
            class: ObjectClass::Vehicle,
            s: p.x,
            l: p.y,
            heading: p.heading,
            speed: self.ego.speed,
            accel: 0.0,
            length: self.ego.length,
            width: self.ego.width,
            height: self.ego.height,
            mass: self.ego.mass,
        }
    }

    /// Ground-truth trajectory of every object, keyed by id, as
    /// `(frame index, state)` pairs.
    pub fn trajectories(&self) -> BTreeMap<u32, Vec<(usize, ObjectState)>> {
        let mut out: BTreeMap<u32, Vec<(usize, ObjectState)>> = BTreeMap::new();
        for (f, frame) in self.frames.iter().enumerate() {
            for obj in &frame.objects {
                out.entry(obj.id).or_default().push((f, *obj));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if (self.meta.dt - FRAME_DT).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "frame period must be {FRAME_DT} s, got {}",
                self.meta.dt
            )));
        }
        if self.meta.history_frames == 0 || self.meta.history_frames > self.frames.len() {
            return Err(Error::Invalid("history_frames out of range".into()));
        }
        for (i, pair) in self.frames.windows(2).enumerate() {
            if ((pair[1].t - pair[0].t) - self.meta.dt).abs() > 1e-9 {
                return Err(Error::Invalid(format!("frames {i} and {} are not 0.5 s apart", i + 1)));
            }
        }
        let egos = self.agents.iter().filter(|a| a.kind == AgentKind::Ego).count();
        if egos != 1 {
            return Err(Error::Invalid(format!("expected one ego agent, found {egos}")));
        }
        for agent in &self.agents {
            if agent.poses.len() != self.frames.len() {
                return Err(Error::Invalid(format!(
                    "agent {} has {} poses for {} frames",
                    agent.id,
                    agent.poses.len(),
                    self.frames.len()
                )));
            }
            agent.noise.validate()?;
        }
        for frame in &self.frames {
            for obj in &frame.objects {
                obj.validate()?;
            }
        }
        for (id, track) in self.trajectories() {
            if track.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
                return Err(Error::Invalid(format!("object {id} appears in non-contiguous frames")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let log: ScenarioLog = serde_json::from_str(text)?;
        log.validate()?;
        Ok(log)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
