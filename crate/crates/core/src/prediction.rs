//! Multi-modal, multi-agent trajectory distributions.
//!
//! A [`TrajectoryDistribution`] holds one bivariate Gaussian per
//! (mode, object, future step) plus a per-object mode weight. Predictors are
//! analytic: a constant-velocity baseline and a set of kinematic intention
//! hypotheses weighted by how well each one explains the observed history.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fusion::TrackHistory;
use crate::scenario::{obb_overlap, wrap_angle, ObjectClass, ObjectState, Obb};
use crate::{Error, Result, FRAME_DT};

/// Prediction horizon in steps: 3 s at 2 Hz.
pub const PREDICTION_STEPS: usize = 6;
const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntentionKind {
    Keep,
    Accelerate,
    Decelerate,
    TurnLeft,
    TurnRight,
}

/// A kinematic hypothesis: constant acceleration and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intention {
    pub kind: IntentionKind,
    pub accel: f64,
    pub yaw_rate: f64,
}

impl Intention {
    pub const KEEP: Intention = Intention {
        kind: IntentionKind::Keep,
        accel: 0.0,
        yaw_rate: 0.0,
    };

    /// keep, accelerate +1.5 m/s², decelerate −2 m/s², turn ±0.25 rad/s.
    pub fn standard_set() -> Vec<Intention> {
        vec![
            Intention::KEEP,
            Intention {
                kind: IntentionKind::Accelerate,
                accel: 1.5,
                yaw_rate: 0.0,
            },
            Intention {
                kind: IntentionKind::Decelerate,
                accel: -2.0,
                yaw_rate: 0.0,
            },
            Intention {
                kind: IntentionKind::TurnLeft,
                accel: 0.0,
                yaw_rate: 0.25,
            },
            Intention {
                kind: IntentionKind::TurnRight,
                accel: 0.0,
                yaw_rate: -0.25,
            },
        ]
    }
}

/// Position, heading and speed after following `intent` for `t` seconds
/// (negative `t` runs the model backwards).
pub fn rollout(state: &ObjectState, intent: &Intention, t: f64) -> ([f64; 2], f64, f64) {
    let (x0, y0, h0, v0) = (state.s, state.l, state.heading, state.speed);
    let a = intent.accel;
    let w = intent.yaw_rate;
    if w == 0.0 {
        let te = if a < 0.0 && t > 0.0 { t.min(-v0 / a) } else { t };
        let dist = v0 * te + 0.5 * a * te * te;
        let (sin, cos) = h0.sin_cos();
        return ([x0 + dist * cos, y0 + dist * sin], h0, (v0 + a * te).max(0.0));
    }
    if a == 0.0 {
        let h = h0 + w * t;
        let r = v0 / w;
        return (
            [x0 + r * (h.sin() - h0.sin()), y0 - r * (h.cos() - h0.cos())],
            wrap_angle(h),
            v0,
        );
    }
    // Combined acceleration and turning: midpoint integration.
    let n = ((t.abs() / 0.01).ceil() as usize).max(1);
    let dt = t / n as f64;
    let (mut x, mut y, mut h, mut v) = (x0, y0, h0, v0);
    for _ in 0..n {
        let vm = (v + 0.5 * a * dt).max(0.0);
        let hm = h + 0.5 * w * dt;
        x += vm * hm.cos() * dt;
        y += vm * hm.sin() * dt;
        h += w * dt;
        v = (v + a * dt).max(0.0);
    }
    ([x, y], wrap_angle(h), v)
}

/// One Gaussian component of the distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeStep {
    pub mean: [f64; 2],
    pub std: [f64; 2],
    /// Correlation coefficient of the two position axes.
    pub corr: f64,
    pub heading: f64,
    pub speed: f64,
}

/// Static description and current state of a predicted participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub track_id: u32,
    pub class: ObjectClass,
    pub length: f64,
    pub width: f64,
    pub mass: f64,
    pub current: ObjectState,
}

impl Participant {
    fn footprint_at(&self, step: &ModeStep) -> Obb {
        Obb::new(step.mean[0], step.mean[1], step.heading, self.length, self.width)
    }
}

/// Gaussian-mixture trajectory distribution over `modes × objects × steps`
/// with per-object mode weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDistribution {
    pub modes: usize,
    pub steps: usize,
    pub dt: f64,
    pub participants: Vec<Participant>,
    /// Row-major over (mode, object, step).
    pub entries: Vec<ModeStep>,
    /// Row-major over (mode, object); each object's column sums to one.
    pub weights: Vec<f64>,
    pub intentions: Vec<Intention>,
}

impl TrajectoryDistribution {
    pub fn empty(modes: usize, steps: usize) -> Self {
        Self {
            modes,
            steps,
            dt: FRAME_DT,
            participants: vec![],
            entries: vec![],
            weights: vec![],
            intentions: vec![],
        }
    }

    pub fn objects(&self) -> usize {
        self.participants.len()
    }

    pub fn entry(&self, mode: usize, object: usize, step: usize) -> &ModeStep {
        &self.entries[(mode * self.objects() + object) * self.steps + step]
    }

    /// Mean trajectory of one mode.
    pub fn mode_path(&self, mode: usize, object: usize) -> &[ModeStep] {
        let start = (mode * self.objects() + object) * self.steps;
        &self.entries[start..start + self.steps]
    }

    pub fn weight(&self, mode: usize, object: usize) -> f64 {
        self.weights[mode * self.objects() + object]
    }

    pub fn intention(&self, mode: usize, object: usize) -> Intention {
        self.intentions[mode * self.objects() + object]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.objects();
        if self.entries.len() != self.modes * n * self.steps
            || self.weights.len() != self.modes * n
            || self.intentions.len() != self.modes * n
        {
            return Err(Error::Invalid("distribution tensor shapes disagree".into()));
        }
        for e in &self.entries {
            if !(e.std[0] > 0.0 && e.std[1] > 0.0) {
                return Err(Error::Invalid("standard deviations must be positive".into()));
            }
            if e.corr.abs() >= 1.0 {
                return Err(Error::Invalid("correlation must lie in (-1, 1)".into()));
            }
        }
        for obj in 0..n {
            let sum: f64 = (0..self.modes).map(|m| self.weight(m, obj)).sum();
            if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(Error::Invalid(format!("weights of object {obj} sum to {sum}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Cv,
    Multimodal,
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" => Ok(PredictorKind::Cv),
            "multimodal" => Ok(PredictorKind::Multimodal),
            other => Err(Error::Config(format!("unknown predictor '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub mode_count: usize,
    /// Position standard deviation at step zero (m).
    pub base_sigma: f64,
    /// Standard-deviation growth per step (m).
    pub sigma_growth: f64,
    pub steps: usize,
    pub intentions: Vec<Intention>,
    /// Allow more modes than intentions by duplicating turns with
    /// jittered curvature.
    pub allow_jittered_duplicates: bool,
    /// Softmax temperature on the retrodiction error (m²).
    pub weight_temperature: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            mode_count: 5,
            base_sigma: 0.5,
            sigma_growth: 0.25,
            steps: PREDICTION_STEPS,
            intentions: Intention::standard_set(),
            allow_jittered_duplicates: false,
            weight_temperature: 1.0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode_count == 0 {
            return Err(Error::Config("mode count must be at least 1".into()));
        }
        if !(self.base_sigma > 0.0) || !(self.sigma_growth >= 0.0) {
            return Err(Error::Config("base_sigma must be > 0 and sigma_growth >= 0".into()));
        }
        if self.steps == 0 || !(self.weight_temperature > 0.0) {
            return Err(Error::Config("steps and temperature must be positive".into()));
        }
        Ok(())
    }

    fn sigma(&self, step: usize) -> f64 {
        self.base_sigma + step as f64 * self.sigma_growth
    }

    /// The intention set extended to `mode_count` entries if allowed.
    fn hypotheses(&self) -> Result<Vec<Intention>> {
        let mut set = self.intentions.clone();
        if self.mode_count <= set.len() {
            return Ok(set);
        }
        if !self.allow_jittered_duplicates {
            return Err(Error::Config(format!(
                "{} modes requested but only {} intentions are defined",
                self.mode_count,
                set.len()
            )));
        }
        let base: Vec<Intention> = set.clone();
        let turns: Vec<Intention> = base.iter().copied().filter(|i| i.yaw_rate != 0.0).collect();
        let mut k = 0usize;
        while set.len() < self.mode_count {
            let src = turns.get(k % turns.len().max(1)).copied().unwrap_or(Intention::KEEP);
            let scale = 1.0 + 0.5 * ((k / turns.len().max(1)) + 1) as f64;
            set.push(Intention {
                yaw_rate: if src.yaw_rate == 0.0 { 0.1 * scale } else { src.yaw_rate * scale },
                ..src
            });
            k += 1;
        }
        Ok(set)
    }
}

fn participant_of(track: &TrackHistory, state: &ObjectState) -> Participant {
    Participant {
        track_id: track.track_id,
        class: state.class,
        length: state.length,
        width: state.width,
        mass: state.mass,
        current: *state,
    }
}

/// Time from the track's last observation to the history's final frame.
fn staleness(track: &TrackHistory, last: usize) -> f64 {
    track.timestamps.last().copied().unwrap_or(0.0) - track.timestamps[last]
}

fn mode_steps(state: &ObjectState, intent: &Intention, lag: f64, cfg: &PredictorConfig) -> Vec<ModeStep> {
    (1..=cfg.steps)
        .map(|k| {
            let (mean, heading, speed) = rollout(state, intent, lag + k as f64 * FRAME_DT);
            let s = cfg.sigma(k);
            ModeStep {
                mean,
                std: [s, s],
                corr: 0.0,
                heading,
                speed,
            }
        })
        .collect()
}

fn usable(histories: &[TrackHistory]) -> Result<Vec<(&TrackHistory, usize, &ObjectState)>> {
    if histories.is_empty() {
        return Err(Error::Invalid("no track histories to predict".into()));
    }
    histories
        .iter()
        .map(|h| {
            h.last_valid()
                .map(|(i, s)| (h, i, s))
                .ok_or_else(|| Error::Invalid(format!("track {} has no valid frame", h.track_id)))
        })
        .collect()
}

/// Constant-velocity baseline: one mode extrapolating the last observed
/// pose at the last estimated speed.
pub fn predict_cv(histories: &[TrackHistory], cfg: &PredictorConfig) -> Result<TrajectoryDistribution> {
    cfg.validate()?;
    let tracks = usable(histories)?;
    let mut dist = TrajectoryDistribution::empty(1, cfg.steps);
    for (track, last, state) in &tracks {
        dist.participants.push(participant_of(track, state));
        dist.entries
            .extend(mode_steps(state, &Intention::KEEP, staleness(track, *last), cfg));
        dist.weights.push(1.0);
        dist.intentions.push(Intention::KEEP);
    }
    Ok(dist)
}

/// Sum of squared distances between the observed positions preceding the
/// last observation (up to two) and the intention run backwards from it.
pub fn retrodiction_error(track: &TrackHistory, intent: &Intention) -> f64 {
    let observed: Vec<(f64, &ObjectState)> = track.observed().collect();
    let Some(&(t_last, last)) = observed.last() else {
        return 0.0;
    };
    observed
        .iter()
        .rev()
        .skip(1)
        .take(2)
        .map(|&(t, obs)| {
            let (p, _, _) = rollout(last, intent, t - t_last);
            (p[0] - obs.s).powi(2) + (p[1] - obs.l).powi(2)
        })
        .sum()
}

fn softmax_neg(errors: &[f64], temperature: f64) -> Vec<f64> {
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = errors.iter().map(|e| (-(e - min) / temperature).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

/// Multi-modal predictor over kinematic intention hypotheses.
///
/// Each object's intentions are ranked by retrodiction error; the best
/// `mode_count` become its modes, ordered best first, and their weights are a
/// softmax over the negated errors.
pub fn predict_multimodal(
    histories: &[TrackHistory],
    cfg: &PredictorConfig,
) -> Result<TrajectoryDistribution> {
    cfg.validate()?;
    let hypotheses = cfg.hypotheses()?;
    let tracks = usable(histories)?;
    let m = cfg.mode_count;
    let n = tracks.len();

    let mut per_object: Vec<(Vec<Intention>, Vec<f64>)> = Vec::with_capacity(n);
    for (track, _, _) in &tracks {
        let errors: Vec<f64> = hypotheses.iter().map(|h| retrodiction_error(track, h)).collect();
        let mut order: Vec<usize> = (0..hypotheses.len()).collect();
        order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)));
        order.truncate(m);
        let chosen_err: Vec<f64> = order.iter().map(|&i| errors[i]).collect();
        let weights = softmax_neg(&chosen_err, cfg.weight_temperature);
        per_object.push((order.iter().map(|&i| hypotheses[i]).collect(), weights));
    }

    let mut dist = TrajectoryDistribution::empty(m, cfg.steps);
    dist.participants = tracks.iter().map(|(t, _, s)| participant_of(t, s)).collect();
    for mode in 0..m {
        for (obj, (track, last, state)) in tracks.iter().enumerate() {
            let intent = per_object[obj].0[mode];
            dist.entries
                .extend(mode_steps(state, &intent, staleness(track, *last), cfg));
        }
    }
    for mode in 0..m {
        for (intents, weights) in &per_object {
            dist.weights.push(weights[mode]);
            dist.intentions.push(intents[mode]);
        }
    }
    Ok(dist)
}

pub fn predict(
    kind: PredictorKind,
    histories: &[TrackHistory],
    cfg: &PredictorConfig,
) -> Result<TrajectoryDistribution> {
    match kind {
        PredictorKind::Cv => predict_cv(histories, cfg),
        PredictorKind::Multimodal => predict_multimodal(histories, cfg),
    }
}

/// `overlap[a][b][i * M + j]`: whether mode `i` of object `a` and mode `j`
/// of object `b` have intersecting mean footprints at a common step.
fn overlap_table(dist: &TrajectoryDistribution) -> Vec<Vec<Vec<bool>>> {
    let n = dist.objects();
    let m = dist.modes;
    let mut table = vec![vec![vec![false; m * m]; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            for i in 0..m {
                let pa = dist.mode_path(i, a);
                for j in 0..m {
                    let pb = dist.mode_path(j, b);
                    let hit = pa.iter().zip(pb).any(|(sa, sb)| {
                        obb_overlap(
                            &dist.participants[a].footprint_at(sa),
                            &dist.participants[b].footprint_at(sb),
                        )
                    });
                    table[a][b][i * m + j] = hit;
                    table[b][a][j * m + i] = hit;
                }
            }
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    /// Factor applied to the joint weight of a colliding mode pair.
    pub penalty: f64,
    pub passes: usize,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            penalty: 0.2,
            passes: 1,
        }
    }
}

/// Down-weights modes whose mean trajectories collide with other objects'
/// modes.
///
/// Objects are updated in order. For object `a` and mode `i`, let `c_i` be
/// the weight of the other objects' modes it collides with, averaged over
/// the other objects. The new weight is `w_i · (1 − (1 − penalty) · c_i)`,
/// renormalised. With two objects this is exactly the marginal of the joint
/// mode distribution after multiplying every colliding pair by `penalty`.
/// Because the factor decreases in `c_i`, no update can raise the overlap
/// rate. Means and spreads are untouched.
pub fn enforce_scene_consistency(
    dist: &TrajectoryDistribution,
    cfg: &ConsistencyConfig,
) -> TrajectoryDistribution {
    let mut out = dist.clone();
    let n = dist.objects();
    let m = dist.modes;
    if n < 2 {
        return out;
    }
    let table = overlap_table(dist);
    for _ in 0..cfg.passes {
        for a in 0..n {
            let factors: Vec<f64> = (0..m)
                .map(|i| {
                    let mut collide = 0.0;
                    let mut any = false;
                    for b in (0..n).filter(|&b| b != a) {
                        for j in 0..m {
                            if table[a][b][i * m + j] {
                                collide += out.weight(j, b);
                                any = true;
                            }
                        }
                    }
                    if any {
                        1.0 - (1.0 - cfg.penalty) * collide / (n - 1) as f64
                    } else {
                        1.0
                    }
                })
                .collect();
            if factors.iter().all(|&f| f == 1.0) {
                continue;
            }
            let total: f64 = (0..m).map(|i| out.weight(i, a) * factors[i]).sum();
            if total <= 0.0 {
                continue;
            }
            for (i, f) in factors.iter().enumerate() {
                let w = out.weight(i, a) * f / total;
                out.weights[i * n + a] = w;
            }
        }
    }
    out
}

/// Weighted probability that an object's predicted modes overlap another
/// object's predicted modes at a common step, averaged over ordered object
/// pairs. Zero for fewer than two objects.
pub fn trajectory_overlap_rate(dist: &TrajectoryDistribution) -> f64 {
    let n = dist.objects();
    if n < 2 {
        return 0.0;
    }
    let m = dist.modes;
    let table = overlap_table(dist);
    let mut total = 0.0;
    for a in 0..n {
        for b in (0..n).filter(|&b| b != a) {
            for i in 0..m {
                for j in 0..m {
                    if table[a][b][i * m + j] {
                        total += dist.weight(i, a) * dist.weight(j, b);
                    }
                }
            }
        }
    }
    (total / (n * (n - 1)) as f64).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{assemble_histories, frame_times};
    use crate::scenario::DetectionBox;

    /// History whose positions follow `state` under `intent`, observed at
    /// frames ending at t = 1.5 s.
    fn history_following(state: ObjectState, intent: Intention) -> TrackHistory {
        let times = frame_times(0.0, 4);
        let frames: Vec<Vec<DetectionBox>> = times
            .iter()
            .map(|&t| {
                let (p, h, v) = rollout(&state, &intent, t - 1.5);
                let mut s = state;
                s.s = p[0];
                s.l = p[1];
                s.heading = h;
                s.speed = v;
                vec![DetectionBox::from_state(&s, 0, t)]
            })
            .collect();
        let mut tracks = assemble_histories(&frames, &times, 3.0);
        assert_eq!(tracks.len(), 1);
        tracks.remove(0)
    }

    fn car(s: f64, l: f64, heading: f64, speed: f64) -> ObjectState {
        ObjectState::new(0, ObjectClass::Vehicle, s, l, heading, speed)
    }

    #[test]
    fn cv_extrapolates_at_half_second_steps() {
        let h = history_following(car(0.0, 0.0, 0.0, 10.0), Intention::KEEP);
        let dist = predict_cv(&[h], &PredictorConfig::default()).unwrap();
        dist.validate().unwrap();
        assert_eq!((dist.modes, dist.steps), (1, 6));
        for k in 0..6 {
            let e = dist.entry(0, 0, k);
            assert!((e.mean[0] - 5.0 * (k + 1) as f64).abs() < 1e-9);
            assert!(e.mean[1].abs() < 1e-12);
        }
        // 0.5 + 6 · 0.25 = 2.0 at the last step.
        assert!((dist.entry(0, 0, 5).std[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cv_keeps_stationary_objects_in_place() {
        let h = history_following(car(3.0, -2.0, 1.0, 0.0), Intention::KEEP);
        let dist = predict_cv(&[h], &PredictorConfig::default()).unwrap();
        for k in 0..6 {
            assert_eq!(dist.entry(0, 0, k).mean, [3.0, -2.0]);
        }
        assert!(predict_cv(&[], &PredictorConfig::default()).is_err());
    }

    #[test]
    fn straight_history_favours_keep() {
        let h = history_following(car(0.0, 0.0, 0.4, 10.0), Intention::KEEP);
        // Oracle: direct arithmetic. Keep retrodicts exactly; accelerate
        // misses by ½·1.5·t² at t = 0.5 and 1.0 s.
        let accel = Intention::standard_set()[1];
        let expected = (0.5 * 1.5 * 0.25f64).powi(2) + (0.5 * 1.5 * 1.0f64).powi(2);
        assert!((retrodiction_error(&h, &accel) - expected).abs() < 1e-9);
        assert!(retrodiction_error(&h, &Intention::KEEP) < 1e-18);

        let dist = predict_multimodal(&[h], &PredictorConfig::default()).unwrap();
        dist.validate().unwrap();
        assert_eq!(dist.intention(0, 0).kind, IntentionKind::Keep);
        for m in 1..dist.modes {
            assert!(dist.weight(0, 0) > dist.weight(m, 0));
        }
    }

    #[test]
    fn left_turning_history_favours_turn_left() {
        let left = Intention::standard_set()[3];
        let h = history_following(car(0.0, 0.0, 0.0, 8.0), left);
        let dist = predict_multimodal(&[h], &PredictorConfig::default()).unwrap();
        assert_eq!(dist.intention(0, 0).kind, IntentionKind::TurnLeft);
        assert!(dist.weight(0, 0) > 0.5);
    }

    #[test]
    fn single_mode_picks_the_best_intention() {
        let right = Intention::standard_set()[4];
        let h = history_following(car(0.0, 0.0, 0.0, 8.0), right);
        let cfg = PredictorConfig {
            mode_count: 1,
            ..Default::default()
        };
        let dist = predict_multimodal(&[h], &cfg).unwrap();
        assert_eq!(dist.weights, vec![1.0]);
        assert_eq!(dist.intention(0, 0).kind, IntentionKind::TurnRight);
    }

    #[test]
    fn too_many_modes_need_jitter() {
        let h = history_following(car(0.0, 0.0, 0.0, 8.0), Intention::KEEP);
        let mut cfg = PredictorConfig {
            mode_count: 7,
            ..Default::default()
        };
        assert!(predict_multimodal(&[h.clone()], &cfg).is_err());
        cfg.allow_jittered_duplicates = true;
        let dist = predict_multimodal(&[h], &cfg).unwrap();
        dist.validate().unwrap();
        assert_eq!(dist.modes, 7);
    }

    #[test]
    fn cv_equals_multimodal_keep_mode() {
        let h = history_following(car(1.0, 2.0, -0.7, 12.0), Intention::KEEP);
        let cv = predict_cv(&[h.clone()], &PredictorConfig::default()).unwrap();
        let mm = predict_multimodal(&[h], &PredictorConfig::default()).unwrap();
        let keep = (0..mm.modes)
            .find(|&m| mm.intention(m, 0).kind == IntentionKind::Keep)
            .unwrap();
        assert_eq!(cv.mode_path(0, 0), mm.mode_path(keep, 0));
    }

    /// Two cars driving head-on along the same line, meeting at step 3.
    pub(crate) fn head_on_pair() -> TrajectoryDistribution {
        let a = history_following(car(-15.0, 0.0, 0.0, 10.0), Intention::KEEP);
        let mut b = history_following(
            ObjectState {
                id: 1,
                ..car(15.0, 0.0, std::f64::consts::PI, 10.0)
            },
            Intention::KEEP,
        );
        b.track_id = 1;
        predict_multimodal(&[a, b], &PredictorConfig::default()).unwrap()
    }

    #[test]
    fn consistency_penalises_head_on_keep_modes() {
        let before = head_on_pair();
        let after = enforce_scene_consistency(&before, &ConsistencyConfig::default());
        after.validate().unwrap();
        assert_eq!(before.entries, after.entries);
        for obj in 0..2 {
            let keep = (0..before.modes)
                .find(|&m| before.intention(m, obj).kind == IntentionKind::Keep)
                .unwrap();
            assert!(after.weight(keep, obj) < before.weight(keep, obj));
            let turned = (0..before.modes)
                .filter(|&m| {
                    matches!(
                        before.intention(m, obj).kind,
                        IntentionKind::TurnLeft | IntentionKind::TurnRight
                    )
                })
                .any(|m| after.weight(m, obj) > before.weight(m, obj));
            assert!(turned);
        }
        assert!(trajectory_overlap_rate(&after) < trajectory_overlap_rate(&before));
    }

    #[test]
    fn distant_objects_are_unchanged() {
        let a = history_following(car(0.0, 0.0, 0.0, 10.0), Intention::KEEP);
        let mut b = history_following(car(0.0, 30.0, 0.0, 10.0), Intention::KEEP);
        b.track_id = 1;
        let dist = predict_multimodal(&[a, b], &PredictorConfig::default()).unwrap();
        let after = enforce_scene_consistency(&dist, &ConsistencyConfig::default());
        assert_eq!(after, dist);
        assert_eq!(enforce_scene_consistency(&after, &ConsistencyConfig::default()), after);
        assert_eq!(trajectory_overlap_rate(&dist), 0.0);
    }

    #[test]
    fn superposed_single_modes_overlap_fully() {
        let a = history_following(car(0.0, 0.0, 0.0, 10.0), Intention::KEEP);
        let mut b = a.clone();
        b.track_id = 1;
        let dist = predict_cv(&[a.clone(), b], &PredictorConfig::default()).unwrap();
        assert_eq!(trajectory_overlap_rate(&dist), 1.0);
        let one = predict_cv(&[a], &PredictorConfig::default()).unwrap();
        assert_eq!(trajectory_overlap_rate(&one), 0.0);
    }
}
