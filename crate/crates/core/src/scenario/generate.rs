//! Seeded synthetic scenario generation.
//!
//! Every template places the ego vehicle at the world origin, heading +x,
//! at the current frame. The world frame is therefore the planning frame.
//! Objects follow closed-form kinematic motions and are placed by rejection
//! sampling so that no two ground-truth footprints ever overlap.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::geometry::{obb_overlap, wrap_angle, Obb, Pose2};
use super::{
    Agent, AgentKind, EgoVehicle, Extent, Frame, ObjectClass, ObjectState, ScenarioLog,
    ScenarioMeta, Template, DEFAULT_PERCEPTION_RADIUS,
};
use crate::fusion::NoiseProfile;
use crate::{seed, Error, Result, FRAME_DT};

/// Observed history: 2 s at 2 Hz.
pub const HISTORY_FRAMES: usize = 4;
/// Ground-truth future kept for evaluation: 5 s, the default planning horizon.
pub const FUTURE_FRAMES: usize = 10;

const MAX_SPEED: f64 = 20.0;
const PLACEMENT_ATTEMPTS: usize = 400;
/// Clearance kept between ground-truth footprints.
const SEPARATION: f64 = 0.4;

/// Largest object count a template accepts.
pub fn lane_capacity(template: Template) -> usize {
    match template {
        Template::Crossing => 8,
        Template::Merge => 8,
        Template::Roundabout => 6,
        Template::Straight => 12,
    }
}

#[derive(Debug, Clone, Copy)]
enum Motion {
    /// Straight line with constant acceleration, stopping at zero speed.
    Line {
        x: f64,
        y: f64,
        heading: f64,
        speed: f64,
        accel: f64,
    },
    /// Constant yaw rate until `until`, straight afterwards.
    Turn {
        x: f64,
        y: f64,
        heading: f64,
        speed: f64,
        yaw_rate: f64,
        until: f64,
    },
    /// Circular motion about a centre; positive rate is counter-clockwise.
    Circle {
        cx: f64,
        cy: f64,
        radius: f64,
        angle: f64,
        rate: f64,
    },
}

impl Motion {
    /// (x, y, heading, speed, accel) at time `t` relative to the reference.
    fn eval(&self, t: f64) -> (f64, f64, f64, f64, f64) {
        match *self {
            Motion::Line {
                x,
                y,
                heading,
                speed,
                accel,
            } => {
                let stop = if accel < 0.0 { -speed / accel } else { f64::INFINITY };
                let tt = t.min(stop);
                let dist = speed * tt + 0.5 * accel * tt * tt;
                let v = (speed + accel * tt).max(0.0);
                let a = if t < stop { accel } else { 0.0 };
                let (sin, cos) = heading.sin_cos();
                (x + dist * cos, y + dist * sin, heading, v, a)
            }
            Motion::Turn {
                x,
                y,
                heading,
                speed,
                yaw_rate,
                until,
            } => {
                let arc = |tt: f64| {
                    if yaw_rate.abs() < 1e-12 {
                        let (sin, cos) = heading.sin_cos();
                        (x + speed * tt * cos, y + speed * tt * sin, heading)
                    } else {
                        let h = heading + yaw_rate * tt;
                        let r = speed / yaw_rate;
                        (
                            x + r * (h.sin() - heading.sin()),
                            y - r * (h.cos() - heading.cos()),
                            h,
                        )
                    }
                };
                if t <= until {
                    let (px, py, h) = arc(t);
                    (px, py, h, speed, 0.0)
                } else {
                    let (px, py, h) = arc(until);
                    let d = speed * (t - until);
                    (px + d * h.cos(), py + d * h.sin(), h, speed, 0.0)
                }
            }
            Motion::Circle {
                cx,
                cy,
                radius,
                angle,
                rate,
            } => {
                let a = angle + rate * t;
                let heading = a + rate.signum() * FRAC_PI_2;
                (
                    cx + radius * a.cos(),
                    cy + radius * a.sin(),
                    heading,
                    radius * rate.abs(),
                    0.0,
                )
            }
        }
    }
}

struct Candidate {
    class: ObjectClass,
    motion: Motion,
    /// May overlap the ego's constant-velocity path.
    conflicts_with_ego: bool,
}

struct Timeline {
    times: Vec<f64>,
    t_now: f64,
}

impl Timeline {
    fn new() -> Self {
        let n = HISTORY_FRAMES + FUTURE_FRAMES;
        Self {
            times: (0..n).map(|i| i as f64 * FRAME_DT).collect(),
            t_now: (HISTORY_FRAMES - 1) as f64 * FRAME_DT,
        }
    }

    /// Times relative to the current frame.
    fn rel(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.iter().map(move |t| t - self.t_now)
    }
}

fn rollout(id: u32, c: &Candidate, tl: &Timeline) -> Vec<ObjectState> {
    let (length, width, height) = c.class.default_extent();
    tl.rel()
        .map(|t| {
            let (x, y, heading, speed, accel) = c.motion.eval(t);
            ObjectState {
                id,
                class: c.class,
                s: x,
                l: y,
                heading: wrap_angle(heading),
                speed,
                accel,
                length,
                width,
                height,
                mass: c.class.default_mass(),
            }
        })
        .collect()
}

fn clashes(a: &[ObjectState], b: &[ObjectState]) -> bool {
    a.iter().zip(b).any(|(p, q)| {
        obb_overlap(
            &p.footprint().inflated(SEPARATION),
            &q.footprint().inflated(SEPARATION),
        )
    })
}

fn ego_path(speed: f64, tl: &Timeline, ego: &EgoVehicle) -> Vec<ObjectState> {
    tl.rel()
        .map(|t| ObjectState {
            id: u32::MAX,
            class: ObjectClass::Vehicle,
            s: speed * t,
            l: 0.0,
            heading: 0.0,
            speed,
            accel: 0.0,
            length: ego.length,
            width: ego.width,
            height: ego.height,
            mass: ego.mass,
        })
        .collect()
}

fn feasible(track: &[ObjectState]) -> bool {
    track.iter().all(|o| o.speed <= MAX_SPEED && o.speed >= 0.0)
}

struct Layout {
    occluders: Vec<Obb>,
    infrastructure: Vec<Pose2>,
}

type Sampler = fn(&mut ChaCha8Rng, &Site, usize) -> Candidate;

/// Per-scenario geometry shared by a template's samplers.
struct Site {
    ego_speed: f64,
    /// x of the crossing street centreline.
    crossing_x: f64,
    /// Ego step (0.5 s) at which the constant-velocity ego reaches `crossing_x`.
    crossing_step: usize,
    conflict: bool,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// A car on the crossing street passing the ego lane centre at
/// `t_cross` seconds after the current frame.
fn crossing_car(rng: &mut ChaCha8Rng, site: &Site, t_cross: f64, y_at_cross: f64) -> Motion {
    let dir = sign(rng);
    let speed = uniform(rng, 6.0, 10.0);
    let x = site.crossing_x + dir * 1.75;
    let y_now = y_at_cross - dir * speed * t_cross;
    Motion::Line {
        x,
        y: y_now,
        heading: dir * FRAC_PI_2,
        speed,
        accel: 0.0,
    }
}

fn crossing_primary(rng: &mut ChaCha8Rng, site: &Site, _idx: usize) -> Candidate {
    let t_conflict = site.crossing_step as f64 * FRAME_DT;
    let (t_cross, y) = if site.conflict {
        (t_conflict, uniform(rng, -0.8, 0.8))
    } else {
        (t_conflict - uniform(rng, 2.5, 4.0), 0.0)
    };
    Candidate {
        class: ObjectClass::Vehicle,
        motion: crossing_car(rng, site, t_cross, y),
        conflicts_with_ego: true,
    }
}

fn crossing_extra(rng: &mut ChaCha8Rng, site: &Site, _idx: usize) -> Candidate {
    let motion = match rng.random_range(0..3) {
        // Oncoming traffic in the opposite lane.
        0 => Motion::Line {
            x: uniform(rng, 5.0, 70.0),
            y: 3.5,
            heading: PI,
            speed: uniform(rng, 7.0, 12.0),
            accel: 0.0,
        },
        // A faster lead vehicle ahead in the ego lane.
        1 => Motion::Line {
            x: uniform(rng, site.crossing_x + 8.0, 70.0),
            y: 0.0,
            heading: 0.0,
            speed: uniform(rng, site.ego_speed + 1.0, site.ego_speed + 4.0),
            accel: 0.0,
        },
        // Crossing traffic that has already cleared the junction.
        _ => {
            let t_cross = -uniform(rng, 0.5, 3.0);
            crossing_car(rng, site, t_cross, 0.0)
        }
    };
    Candidate {
        class: ObjectClass::Vehicle,
        motion,
        conflicts_with_ego: false,
    }
}

fn straight_any(rng: &mut ChaCha8Rng, _site: &Site, _idx: usize) -> Candidate {
    let roll = rng.random_range(0..10);
    if roll == 0 {
        // Pedestrian on a sidewalk.
        let dir = sign(rng);
        Candidate {
            class: ObjectClass::Pedestrian,
            motion: Motion::Line {
                x: uniform(rng, -50.0, 50.0),
                y: 8.0 * sign(rng),
                heading: if dir > 0.0 { 0.0 } else { PI },
                speed: uniform(rng, 1.0, 1.8),
                accel: 0.0,
            },
            conflicts_with_ego: false,
        }
    } else {
        let lane = [-3.5, 0.0, 3.5, 7.0][rng.random_range(0..4)];
        let heading = if lane > 1.0 { PI } else { 0.0 };
        let class = if roll == 1 { ObjectClass::Cyclist } else { ObjectClass::Vehicle };
        let speed = match class {
            ObjectClass::Cyclist => uniform(rng, 3.0, 6.0),
            _ => uniform(rng, 5.0, 15.0),
        };
        Candidate {
            class,
            motion: Motion::Line {
                x: uniform(rng, -60.0, 60.0),
                y: lane,
                heading,
                speed,
                accel: 0.0,
            },
            conflicts_with_ego: false,
        }
    }
}

fn merge_any(rng: &mut ChaCha8Rng, _site: &Site, idx: usize) -> Candidate {
    let motion = if idx % 2 == 0 {
        // On-ramp: angled approach that straightens into the right lane.
        let yaw_rate = -0.1;
        let approach = 0.3;
        let until = approach / -yaw_rate;
        let speed = uniform(rng, 8.0, 12.0);
        Motion::Turn {
            x: uniform(rng, -20.0, 30.0),
            y: -9.0,
            heading: approach,
            speed,
            yaw_rate,
            until: until - uniform(rng, 0.0, 1.0),
        }
    } else {
        Motion::Line {
            x: uniform(rng, -40.0, 60.0),
            y: -3.5,
            heading: 0.0,
            speed: uniform(rng, 8.0, 14.0),
            accel: uniform(rng, -0.5, 0.5),
        }
    };
    Candidate {
        class: ObjectClass::Vehicle,
        motion,
        conflicts_with_ego: false,
    }
}

fn roundabout_any(rng: &mut ChaCha8Rng, _site: &Site, _idx: usize) -> Candidate {
    let radius = 12.0;
    let speed = uniform(rng, 5.0, 8.0);
    Candidate {
        class: ObjectClass::Vehicle,
        motion: Motion::Circle {
            cx: 40.0,
            cy: 22.0,
            radius,
            angle: uniform(rng, -PI, PI),
            rate: speed / radius,
        },
        conflicts_with_ego: false,
    }
}

fn layout(template: Template, site: &Site) -> Layout {
    match template {
        Template::Crossing => {
            let xc = site.crossing_x;
            Layout {
                // Buildings on the two near corners hide the crossing street
                // from the approaching ego vehicle.
                occluders: vec![
                    Obb::from_bounds(xc - 40.0, xc - 6.0, -40.0, -5.5),
                    Obb::from_bounds(xc - 40.0, xc - 6.0, 6.0, 40.0),
                ],
                infrastructure: vec![Pose2::new(xc + 7.0, -7.0, PI)],
            }
        }
        Template::Straight => Layout {
            occluders: vec![],
            infrastructure: vec![Pose2::new(30.0, 11.0, -FRAC_PI_2)],
        },
        Template::Merge => Layout {
            occluders: vec![Obb::from_bounds(-30.0, 5.0, -30.0, -14.0)],
            infrastructure: vec![Pose2::new(25.0, -14.0, FRAC_PI_2)],
        },
        Template::Roundabout => Layout {
            occluders: vec![],
            infrastructure: vec![Pose2::new(40.0, 22.0, 0.0)],
        },
    }
}

/// Generates a deterministic scenario from `(template, density, seed)`.
pub fn generate_scenario(template: Template, density: usize, seed: u64) -> Result<ScenarioLog> {
    if density == 0 {
        return Err(Error::Config("density must be at least 1".into()));
    }
    let capacity = lane_capacity(template);
    if density > capacity {
        return Err(Error::Capacity {
            template: template.to_string(),
            requested: density,
            capacity,
        });
    }

    let mut rng = seed::rng(seed, &[template as u64, density as u64]);
    let tl = Timeline::new();

    let ego_speed = if template == Template::Straight && density == 1 {
        10.0
    } else {
        uniform(&mut rng, 8.0, 12.0)
    };
    let crossing_step = rng.random_range(4..=6usize);
    let site = Site {
        ego_speed,
        crossing_x: ego_speed * FRAME_DT * crossing_step as f64,
        crossing_step,
        conflict: rng.random_bool(0.7),
    };
    let ego = EgoVehicle {
        speed: ego_speed,
        desired_speed: ego_speed,
        ..EgoVehicle::default()
    };
    let ego_track = ego_path(ego_speed, &tl, &ego);
    let lay = layout(template, &site);

    let samplers: Vec<Sampler> = match template {
        Template::Crossing => {
            let mut v: Vec<Sampler> = vec![crossing_primary];
            v.extend(std::iter::repeat_n(crossing_extra as Sampler, density - 1));
            v
        }
        Template::Straight => vec![straight_any; density],
        Template::Merge => vec![merge_any; density],
        Template::Roundabout => vec![roundabout_any; density],
    };

    let mut tracks: Vec<Vec<ObjectState>> = Vec::with_capacity(density);
    for (idx, sampler) in samplers.into_iter().enumerate() {
        let id = idx as u32 + 1;
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let cand = sampler(&mut rng, &site, idx);
            let track = rollout(id, &cand, &tl);
            if !feasible(&track) {
                continue;
            }
            if !cand.conflicts_with_ego && clashes(&track, &ego_track) {
                continue;
            }
            // The ego's observed history is fixed; nothing may overlap it.
            if clashes(&track[..HISTORY_FRAMES], &ego_track[..HISTORY_FRAMES]) {
                continue;
            }
            if tracks.iter().any(|other| clashes(&track, other)) {
                continue;
            }
            placed = Some(track);
            break;
        }
        match placed {
            Some(track) => tracks.push(track),
            None => {
                return Err(Error::Capacity {
                    template: template.to_string(),
                    requested: density,
                    capacity: tracks.len(),
                })
            }
        }
    }

    let frames = tl
        .times
        .iter()
        .enumerate()
        .map(|(f, &t)| Frame {
            t,
            objects: tracks.iter().map(|tr| tr[f]).collect(),
        })
        .collect();

    let mut agents = vec![Agent {
        id: 0,
        kind: AgentKind::Ego,
        poses: ego_track.iter().map(|o| o.pose()).collect(),
        perception_radius: DEFAULT_PERCEPTION_RADIUS,
        noise: NoiseProfile::default(),
    }];
    for (i, pose) in lay.infrastructure.iter().enumerate() {
        agents.push(Agent {
            id: i as u32 + 1,
            kind: AgentKind::Infrastructure,
            poses: vec![*pose; tl.times.len()],
            perception_radius: DEFAULT_PERCEPTION_RADIUS,
            noise: NoiseProfile::default(),
        });
    }

    Ok(ScenarioLog {
        meta: ScenarioMeta {
            seed,
            template: Some(template),
            dt: FRAME_DT,
            history_frames: HISTORY_FRAMES,
        },
        ego,
        agents,
        occluders: lay.occluders,
        map_extent: Extent::EVALUATION,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::obb_iou;

    #[test]
    fn single_straight_object_moves_at_constant_velocity() {
        let log = generate_scenario(Template::Straight, 1, 7).unwrap();
        log.validate().unwrap();
        let track: Vec<_> = log.frames.iter().map(|f| f.objects[0]).collect();
        assert_eq!(track.len(), HISTORY_FRAMES + FUTURE_FRAMES);
        let v = track[0].speed;
        for pair in track.windows(2) {
            assert_eq!(pair[1].speed, v);
            assert_eq!(pair[1].heading, pair[0].heading);
            let step = (pair[1].s - pair[0].s).hypot(pair[1].l - pair[0].l);
            assert!((step - v * FRAME_DT).abs() < 1e-9);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scenario(Template::Crossing, 6, 42).unwrap().to_json().unwrap();
        let b = generate_scenario(Template::Crossing, 6, 42).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(Template::Crossing, 6, 43).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn crossing_has_no_ground_truth_overlap() {
        let log = generate_scenario(Template::Crossing, 6, 42).unwrap();
        for frame in &log.frames {
            for (i, a) in frame.objects.iter().enumerate() {
                for b in &frame.objects[i + 1..] {
                    assert_eq!(obb_iou(&a.footprint(), &b.footprint()), 0.0);
                }
            }
        }
    }

    #[test]
    fn all_templates_generate_valid_feasible_logs() {
        for template in [Template::Crossing, Template::Merge, Template::Roundabout, Template::Straight] {
            for seed in 0..5 {
                let log = generate_scenario(template, 4, seed).unwrap();
                log.validate().unwrap();
                assert_eq!(log.frames[0].objects.len(), 4);
                for pair in log.frames.windows(2) {
                    for (a, b) in pair[0].objects.iter().zip(&pair[1].objects) {
                        assert!(b.speed <= MAX_SPEED);
                        // Heading change per frame bounds the path curvature.
                        let dh = wrap_angle(b.heading - a.heading).abs();
                        assert!(dh <= 0.5, "{template} seed {seed}: heading jump {dh}");
                    }
                }
            }
        }
    }

    #[test]
    fn density_is_bounded() {
        let err = generate_scenario(Template::Roundabout, 7, 1).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
        assert!(generate_scenario(Template::Straight, 0, 1).is_err());
    }

    #[test]
    fn crossing_conflicts_with_the_uncontrolled_ego() {
        let mut conflicts = 0;
        for seed in 0..40 {
            let log = generate_scenario(Template::Crossing, 3, seed).unwrap();
            let ego_path: Vec<_> = (0..log.frames.len()).map(|f| log.ego_state(f)).collect();
            let hit = log.frames.iter().zip(&ego_path).any(|(frame, e)| {
                frame
                    .objects
                    .iter()
                    .any(|o| obb_overlap(&o.footprint(), &e.footprint()))
            });
            conflicts += hit as usize;
        }
        assert!(conflicts >= 12, "only {conflicts}/40 conflicting crossings");
    }

    #[test]
    fn motions_are_continuous() {
        let m = Motion::Turn {
            x: 0.0,
            y: 0.0,
            heading: 0.3,
            speed: 10.0,
            yaw_rate: -0.1,
            until: 3.0,
        };
        let (x0, y0, ..) = m.eval(3.0 - 1e-9);
        let (x1, y1, ..) = m.eval(3.0 + 1e-9);
        assert!((x0 - x1).abs() < 1e-6 && (y0 - y1).abs() < 1e-6);
        let stop = Motion::Line {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 4.0,
            accel: -2.0,
        };
        let (x, _, _, v, _) = stop.eval(10.0);
        assert_eq!(v, 0.0);
        assert!((x - 4.0).abs() < 1e-12);
    }
}
