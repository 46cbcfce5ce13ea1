//! Simulated per-agent sensing, V2X delay, late fusion by non-maximum
//! suppression, and track-history assembly.

use std::cmp::Ordering;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scenario::{Agent, AgentKind, DetectionBox, Frame, ObjectState, Obb};
use crate::{seed, Error, Result, FRAME_DT};

/// Default IoU above which NMS treats two boxes as the same object.
pub const DEFAULT_NMS_IOU: f64 = 0.3;
/// Association gate for track assembly (m).
pub const DEFAULT_TRACK_GATE: f64 = 3.0;
/// Maximum confidence jitter subtracted from 1.0 for each detection.
const CONFIDENCE_JITTER: f64 = 0.1;

/// Detection noise and communication delay of one sensing agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseProfile {
    /// Positional noise, per axis (m).
    pub pos_sigma: f64,
    /// Heading noise (rad).
    pub heading_sigma: f64,
    pub dropout_prob: f64,
    /// V2X delay (ms). Only applied to non-ego agents.
    pub delay_ms: f64,
}

impl NoiseProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.pos_sigma >= 0.0 && self.heading_sigma >= 0.0) {
            return Err(Error::Config("noise sigmas must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::Config("dropout probability must lie in [0, 1]".into()));
        }
        if !(self.delay_ms >= 0.0 && self.delay_ms.is_finite()) {
            return Err(Error::Config("delay must be non-negative".into()));
        }
        Ok(())
    }
}

impl FromStr for NoiseProfile {
    type Err = Error;

    /// Parses `pos=σ,heading=σ,dropout=p,delay=ms`. Heading noise is given
    /// in degrees; every key is optional and defaults to zero.
    fn from_str(s: &str) -> Result<Self> {
        let mut p = NoiseProfile::default();
        for part in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("noise term '{part}' is not key=value")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("noise value '{value}' is not a number")))?;
            match key.trim() {
                "pos" => p.pos_sigma = v,
                "heading" => p.heading_sigma = v.to_radians(),
                "dropout" => p.dropout_prob = v,
                "delay" => p.delay_ms = v,
                other => return Err(Error::Config(format!("unknown noise key '{other}'"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// Sensing environment shared by all agents at one frame.
pub struct SensingScene<'a> {
    pub frame_index: usize,
    pub truth: &'a Frame,
    pub occluders: &'a [Obb],
}

fn occluded(from: [f64; 2], target: &ObjectState, scene: &SensingScene<'_>) -> bool {
    let to = [target.s, target.l];
    scene.occluders.iter().any(|o| o.intersects_segment(from, to))
        || scene.truth.objects.iter().any(|o| {
            if o.id == target.id {
                return false;
            }
            let fp = o.footprint();
            // The platform an agent is mounted on does not block its view.
            !fp.contains(from) && fp.intersects_segment(from, to)
        })
}

/// Detects the participants an agent can see at one frame, in world
/// coordinates.
///
/// Objects beyond the perception radius or whose centre is hidden behind an
/// occluder or another participant are missed. Each remaining object is
/// dropped with probability `dropout_prob`, then perturbed by Gaussian noise
/// on position and heading. The random stream is keyed by
/// `(seed, agent, frame, object)`, so results do not depend on object order
/// and the standard-normal draws are shared across noise levels.
pub fn sense(
    agent: &Agent,
    scene: &SensingScene<'_>,
    profile: &NoiseProfile,
    seed: u64,
) -> Vec<DetectionBox> {
    let pose = agent.poses[scene.frame_index];
    let origin = [pose.x, pose.y];
    let mut out = Vec::new();
    for obj in &scene.truth.objects {
        if obj.footprint().contains(origin) {
            continue;
        }
        let range = (obj.s - pose.x).hypot(obj.l - pose.y);
        if range > agent.perception_radius || occluded(origin, obj, scene) {
            continue;
        }
        let mut rng = seed::rng(
            seed,
            &[agent.id as u64, scene.frame_index as u64, obj.id as u64],
        );
        let drop: f64 = rng.random();
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        let zh: f64 = rng.sample(StandardNormal);
        let jitter: f64 = rng.random();
        if drop < profile.dropout_prob {
            continue;
        }
        let mut det = DetectionBox::from_state(obj, agent.id, scene.truth.t);
        det.s += profile.pos_sigma * zx;
        det.l += profile.pos_sigma * zy;
        det.heading = crate::scenario::wrap_angle(det.heading + profile.heading_sigma * zh);
        det.confidence = 1.0 - CONFIDENCE_JITTER * jitter;
        out.push(det);
    }
    out
}

/// Detections of one agent over the frames of a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStream {
    pub agent_id: u32,
    pub kind: AgentKind,
    pub delay_ms: f64,
    pub frames: Vec<Vec<DetectionBox>>,
}

/// Replaces each non-ego frame with the newest frame whose timestamp is at
/// most `t − delay`. Stale detections keep their original timestamp; no
/// motion compensation is applied. An agent whose delay reaches past the
/// start of its history contributes nothing for that frame.
pub fn apply_delay(streams: &[AgentStream], times: &[f64]) -> Vec<AgentStream> {
    streams
        .iter()
        .map(|stream| {
            if stream.kind == AgentKind::Ego || stream.delay_ms <= 0.0 {
                return stream.clone();
            }
            let delay = stream.delay_ms / 1000.0;
            let frames = times
                .iter()
                .map(|&t| {
                    let cutoff = t - delay + 1e-9;
                    times
                        .iter()
                        .rposition(|&ti| ti <= cutoff)
                        .map(|g| stream.frames[g].clone())
                        .unwrap_or_default()
                })
                .collect();
            AgentStream {
                frames,
                ..stream.clone()
            }
        })
        .collect()
}

fn by_confidence(a: &DetectionBox, b: &DetectionBox) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then(a.source_agent.cmp(&b.source_agent))
        .then(a.s.total_cmp(&b.s))
        .then(a.l.total_cmp(&b.l))
}

/// Greedy non-maximum suppression over detections already expressed in one
/// frame: keep the most confident box, drop every remaining box whose IoU
/// with it exceeds `iou_threshold`, repeat.
pub fn nms_fuse(detections: &[DetectionBox], iou_threshold: f64) -> Vec<DetectionBox> {
    let mut sorted = detections.to_vec();
    sorted.sort_by(by_confidence);
    let mut keep: Vec<DetectionBox> = Vec::with_capacity(sorted.len());
    for det in sorted {
        if keep.iter().all(|k| k.iou(&det) <= iou_threshold) {
            keep.push(det);
        }
    }
    keep
}

/// The tracked history of one fused object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackHistory {
    pub track_id: u32,
    pub timestamps: Vec<f64>,
    /// Kinematic state per frame; `None` where the object was not observed.
    pub states: Vec<Option<ObjectState>>,
    pub boxes: Vec<Option<DetectionBox>>,
}

impl TrackHistory {
    pub fn validity(&self) -> Vec<bool> {
        self.states.iter().map(Option::is_some).collect()
    }

    /// Most recent observed state.
    pub fn last_valid(&self) -> Option<(usize, &ObjectState)> {
        self.states
            .iter()
            .enumerate()
            .rev()
            .find_map(|(i, s)| s.as_ref().map(|s| (i, s)))
    }

    /// Observed `(timestamp, state)` pairs, oldest first.
    pub fn observed(&self) -> impl Iterator<Item = (f64, &ObjectState)> {
        self.timestamps
            .iter()
            .zip(&self.states)
            .filter_map(|(&t, s)| s.as_ref().map(|s| (t, s)))
    }

    pub fn is_current(&self) -> bool {
        matches!(self.states.last(), Some(Some(_)))
    }
}

struct Building {
    boxes: Vec<Option<DetectionBox>>,
}

impl Building {
    fn last(&self) -> (usize, &DetectionBox) {
        self.boxes
            .iter()
            .enumerate()
            .rev()
            .find_map(|(i, b)| b.as_ref().map(|b| (i, b)))
            .expect("tracks start with a detection")
    }

    /// Constant-velocity position forecast for frame `f`.
    fn forecast(&self, f: usize, times: &[f64]) -> [f64; 2] {
        let (i, last) = self.last();
        let dt = times[f] - times[i];
        let prev = self.boxes[..i]
            .iter()
            .enumerate()
            .rev()
            .find_map(|(j, b)| b.as_ref().map(|b| (j, b)));
        let (vx, vy) = match prev {
            Some((j, p)) => {
                let span = times[i] - times[j];
                ((last.s - p.s) / span, (last.l - p.l) / span)
            }
            None => (last.speed * last.heading.cos(), last.speed * last.heading.sin()),
        };
        [last.s + vx * dt, last.l + vy * dt]
    }
}

/// Links fused detections over consecutive frames into track histories.
///
/// Association is greedy nearest neighbour between each track's
/// constant-velocity forecast and the frame's detections, within `gate`
/// metres. Unmatched detections open new tracks. Speeds and accelerations are
/// finite differences of the observed positions; a single-observation track
/// keeps the detection's reported speed.
pub fn assemble_histories(
    frames: &[Vec<DetectionBox>],
    times: &[f64],
    gate: f64,
) -> Vec<TrackHistory> {
    assert_eq!(frames.len(), times.len(), "one timestamp per frame");
    let n = frames.len();
    let mut tracks: Vec<Building> = Vec::new();
    for (f, dets) in frames.iter().enumerate() {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, track) in tracks.iter().enumerate() {
            let (_, last) = track.last();
            let pred = track.forecast(f, times);
            for (di, d) in dets.iter().enumerate() {
                if d.class != last.class {
                    continue;
                }
                let dist = (d.s - pred[0]).hypot(d.l - pred[1]);
                if dist <= gate {
                    pairs.push((dist, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_used = vec![false; tracks.len()];
        let mut det_used = vec![false; dets.len()];
        for (_, ti, di) in pairs {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            tracks[ti].boxes[f] = Some(dets[di]);
        }
        for (di, d) in dets.iter().enumerate() {
            if !det_used[di] {
                let mut boxes = vec![None; n];
                boxes[f] = Some(*d);
                tracks.push(Building { boxes });
            }
        }
    }

    tracks
        .into_iter()
        .enumerate()
        .map(|(id, b)| finish_track(id as u32, b.boxes, times))
        .collect()
}

fn finish_track(track_id: u32, boxes: Vec<Option<DetectionBox>>, times: &[f64]) -> TrackHistory {
    let observed: Vec<(f64, DetectionBox)> = times
        .iter()
        .zip(&boxes)
        .filter_map(|(&t, b)| b.map(|b| (t, b)))
        .collect();
    let n = observed.len();

    // Backward differences; the first observation borrows the second's.
    let mut speeds: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 {
                return observed[0].1.speed;
            }
            let (t0, p) = observed[k - 1];
            let (t1, q) = observed[k];
            (q.s - p.s).hypot(q.l - p.l) / (t1 - t0)
        })
        .collect();
    if n >= 2 {
        speeds[0] = speeds[1];
    }
    let mut accels: Vec<f64> = (0..n)
        .map(|k| {
            if k < 2 {
                return 0.0;
            }
            (speeds[k] - speeds[k - 1]) / (observed[k].0 - observed[k - 1].0)
        })
        .collect();
    if n >= 3 {
        accels[0] = accels[2];
        accels[1] = accels[2];
    }

    let mut observed_states = observed.iter().zip(speeds.iter().zip(&accels)).map(|(&(_, b), (&v, &a))| {
        let mut st = ObjectState::new(track_id, b.class, b.s, b.l, b.heading, v);
        st.length = b.length;
        st.width = b.width;
        st.height = b.height;
        st.accel = a;
        st
    });
    let states = boxes
        .iter()
        .map(|b| b.map(|_| observed_states.next().expect("one state per box")))
        .collect();
    TrackHistory {
        track_id,
        timestamps: times.to_vec(),
        states,
        boxes,
    }
}

/// Frame timestamps `t0, t0 + 0.5, ...`.
pub fn frame_times(t0: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t0 + i as f64 * FRAME_DT).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ObjectClass, Pose2};

    fn agent(kind: AgentKind, x: f64, y: f64) -> Agent {
        Agent {
            id: if kind == AgentKind::Ego { 0 } else { 1 },
            kind,
            poses: vec![Pose2::new(x, y, 0.0); 4],
            perception_radius: 50.0,
            noise: NoiseProfile::default(),
        }
    }

    fn car(id: u32, s: f64, l: f64, heading: f64, speed: f64) -> ObjectState {
        ObjectState::new(id, ObjectClass::Vehicle, s, l, heading, speed)
    }

    #[test]
    fn noiseless_sensing_reproduces_truth_inside_radius() {
        let frame = Frame {
            t: 0.0,
            objects: vec![car(1, 10.0, 3.0, 0.2, 5.0), car(2, 60.0, 0.0, 0.0, 5.0)],
        };
        let scene = SensingScene {
            frame_index: 0,
            truth: &frame,
            occluders: &[],
        };
        let dets = sense(&agent(AgentKind::Ego, 0.0, 0.0), &scene, &NoiseProfile::default(), 3);
        assert_eq!(dets.len(), 1, "the object 60 m away is out of range");
        let d = dets[0];
        assert_eq!((d.id, d.s, d.l, d.heading), (1, 10.0, 3.0, 0.2));
        assert!(d.confidence > 0.9 && d.confidence <= 1.0);
    }

    #[test]
    fn occluders_hide_objects() {
        let frame = Frame {
            t: 0.0,
            objects: vec![car(1, 20.0, 0.0, 0.0, 5.0)],
        };
        let wall = [Obb::from_bounds(8.0, 10.0, -5.0, 5.0)];
        let scene = SensingScene {
            frame_index: 0,
            truth: &frame,
            occluders: &wall,
        };
        let p = NoiseProfile::default();
        assert!(sense(&agent(AgentKind::Ego, 0.0, 0.0), &scene, &p, 0).is_empty());
        assert_eq!(sense(&agent(AgentKind::Infrastructure, 30.0, 0.0), &scene, &p, 0).len(), 1);
    }

    #[test]
    fn positional_noise_matches_profile() {
        let frame = Frame {
            t: 0.0,
            objects: vec![car(1, 20.0, 5.0, 0.0, 0.0)],
        };
        let scene = SensingScene {
            frame_index: 0,
            truth: &frame,
            occluders: &[],
        };
        let profile = NoiseProfile {
            pos_sigma: 0.5,
            ..Default::default()
        };
        let a = agent(AgentKind::Infrastructure, 0.0, 0.0);
        let o = frame.objects[0];
        let mut errs = Vec::new();
        for seed in 0..5000 {
            for d in sense(&a, &scene, &profile, seed) {
                errs.push(d.s - o.s);
                errs.push(d.l - o.l);
            }
        }
        assert!(errs.len() >= 10_000);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errs.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - 0.5).abs() < 0.025, "empirical std {std}");
    }

    #[test]
    fn sensing_is_deterministic_and_dropout_applies() {
        let frame = Frame {
            t: 0.0,
            objects: (0..20).map(|i| car(i, i as f64 * 5.0 - 45.0, 10.0, 0.0, 0.0)).collect(),
        };
        let scene = SensingScene {
            frame_index: 0,
            truth: &frame,
            occluders: &[],
        };
        let p = NoiseProfile {
            pos_sigma: 0.3,
            heading_sigma: 0.01,
            dropout_prob: 0.5,
            delay_ms: 0.0,
        };
        let a = agent(AgentKind::Infrastructure, 0.0, 0.0);
        assert_eq!(sense(&a, &scene, &p, 9), sense(&a, &scene, &p, 9));
        let n = sense(&a, &scene, &p, 9).len();
        assert!(n > 0 && n < 20);
        let all = NoiseProfile { dropout_prob: 1.0, ..p };
        assert!(sense(&a, &scene, &all, 9).is_empty());
    }

    fn stream(kind: AgentKind, delay_ms: f64, times: &[f64]) -> AgentStream {
        AgentStream {
            agent_id: if kind == AgentKind::Ego { 0 } else { 1 },
            kind,
            delay_ms,
            frames: times
                .iter()
                .map(|&t| vec![DetectionBox::from_state(&car(1, t, 0.0, 0.0, 1.0), 1, t)])
                .collect(),
        }
    }

    #[test]
    fn delay_floors_to_frame_grid() {
        let times = frame_times(0.0, 7);
        let zero = vec![stream(AgentKind::Infrastructure, 0.0, &times)];
        assert_eq!(apply_delay(&zero, &times), zero);

        let s = vec![stream(AgentKind::Infrastructure, 500.0, &times), stream(AgentKind::Ego, 500.0, &times)];
        let out = apply_delay(&s, &times);
        // t = 3.0 s is frame 6; the infrastructure frame is stamped 2.5 s.
        assert_eq!(out[0].frames[6][0].timestamp, 2.5);
        assert_eq!(out[1].frames[6][0].timestamp, 3.0);
        assert!(out[0].frames[0].is_empty());

        let s = vec![stream(AgentKind::Infrastructure, 100.0, &times)];
        let out = apply_delay(&s, &times);
        for f in 1..times.len() {
            assert_eq!(out[0].frames[f][0].timestamp, times[f] - 0.5);
        }
    }

    #[test]
    fn nms_merges_duplicates_only() {
        let a = DetectionBox {
            confidence: 0.95,
            ..DetectionBox::from_state(&car(1, 0.0, 0.0, 0.0, 0.0), 0, 0.0)
        };
        let b = DetectionBox {
            confidence: 0.9,
            source_agent: 1,
            s: 0.1,
            ..a
        };
        assert!(a.iou(&b) > 0.9);
        let neighbour = DetectionBox {
            l: 2.5,
            confidence: 0.99,
            ..a
        };
        let fused = nms_fuse(&[b, a, neighbour], DEFAULT_NMS_IOU);
        assert_eq!(fused.len(), 2);
        assert_eq!(fused[0], neighbour);
        assert_eq!(fused[1], a);
        assert_eq!(nms_fuse(&fused, DEFAULT_NMS_IOU), fused);
        assert!(nms_fuse(&[], 0.3).is_empty());
    }

    fn frames_of(objs: &[ObjectState], times: &[f64]) -> Vec<Vec<DetectionBox>> {
        times
            .iter()
            .map(|&t| {
                objs.iter()
                    .map(|o| {
                        let mut m = *o;
                        m.s += o.speed * o.heading.cos() * t;
                        m.l += o.speed * o.heading.sin() * t;
                        DetectionBox::from_state(&m, 0, t)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_noiseless_object_yields_exact_track() {
        let times = frame_times(0.0, 4);
        let obj = car(7, 0.0, 0.0, 0.3, 10.0);
        let tracks = assemble_histories(&frames_of(&[obj], &times), &times, DEFAULT_TRACK_GATE);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].validity(), vec![true; 4]);
        for (k, st) in tracks[0].states.iter().enumerate() {
            let st = st.unwrap();
            let t = times[k];
            assert!((st.s - 10.0 * 0.3f64.cos() * t).abs() < 1e-9);
            assert!((st.l - 10.0 * 0.3f64.sin() * t).abs() < 1e-9);
            assert!((st.speed - 10.0).abs() < 1e-9);
            assert!(st.accel.abs() < 1e-9);
            assert_eq!(st.heading, 0.3);
            assert_eq!(st.mass, obj.mass);
        }
    }

    #[test]
    fn separated_objects_keep_identities() {
        let times = frame_times(0.0, 4);
        let objs = [car(1, 0.0, 0.0, 0.0, 10.0), car(2, 0.0, 20.0, 0.0, 10.0)];
        let tracks = assemble_histories(&frames_of(&objs, &times), &times, DEFAULT_TRACK_GATE);
        assert_eq!(tracks.len(), 2);
        for tr in &tracks {
            let ids: Vec<u32> = tr.boxes.iter().map(|b| b.unwrap().id).collect();
            assert!(ids.iter().all(|&i| i == ids[0]));
        }
    }

    #[test]
    fn dropout_leaves_a_gap_in_the_mask() {
        let times = frame_times(0.0, 4);
        let mut frames = frames_of(&[car(1, 0.0, 0.0, 0.0, 10.0)], &times);
        frames[1].clear();
        let tracks = assemble_histories(&frames, &times, DEFAULT_TRACK_GATE);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].validity(), vec![true, false, true, true]);
        assert!((tracks[0].states[3].unwrap().speed - 10.0).abs() < 1e-9);
    }

    #[test]
    fn noise_flag_parsing() {
        let p: NoiseProfile = "pos=0.4,heading=0.5,dropout=0.1,delay=200".parse().unwrap();
        assert_eq!(p.pos_sigma, 0.4);
        assert!((p.heading_sigma - 0.5f64.to_radians()).abs() < 1e-15);
        assert_eq!(p.dropout_prob, 0.1);
        assert_eq!(p.delay_ms, 200.0);
        assert!("pos=-1".parse::<NoiseProfile>().is_err());
        assert!("speed=1".parse::<NoiseProfile>().is_err());
        assert!("dropout=2".parse::<NoiseProfile>().is_err());
    }
}
