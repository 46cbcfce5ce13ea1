//! End-to-end orchestration of one scenario, batch summaries and noise
//! sweeps.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{
    ap_from_scores, collides, epa, greedy_match, object_min_ade_fde, resample, score_detections, MatchResult,
    DEFAULT_AP_IOU, DEFAULT_EPA_ALPHA, DEFAULT_TAU_EPA,
};
use crate::error::Stage;
use crate::fusion::{apply_delay, assemble_histories, nms_fuse, sense, AgentStream, NoiseProfile, SensingScene};
use crate::fusion::{DEFAULT_NMS_IOU, DEFAULT_TRACK_GATE};
use crate::planner::{rollout, solve_mpc, Control, Plan, PlannerConfig, PlannerState};
use crate::prediction::{
    enforce_scene_consistency, predict, trajectory_overlap_rate, ConsistencyConfig, PredictorConfig, PredictorKind,
    TrajectoryDistribution,
};
use crate::riskmap::{build_risk_map, EgoParams, RiskMap, RiskMapConfig};
use crate::scenario::{generate_scenario, AgentKind, DetectionBox, Obb, ObjectState, ScenarioLog, Template};
use crate::{Error, Result};

/// Where detections come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perception {
    /// Simulated per-agent sensing with occlusion, noise and delay.
    #[default]
    Sensed,
    /// Every ground-truth object inside the evaluation extent, exactly.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub perception: Perception,
    /// Fuse detections of all agents; ego only otherwise.
    pub cooperative: bool,
    /// Replaces every agent's own noise profile when set.
    pub noise: Option<NoiseProfile>,
    pub nms_iou: f64,
    pub track_gate: f64,
    pub predictor: PredictorKind,
    pub prediction: PredictorConfig,
    /// Scene-consistency reweighting; skipped when `None`.
    pub consistency: Option<ConsistencyConfig>,
    pub riskmap: RiskMapConfig,
    pub planner: PlannerConfig,
    /// Build the risk map and plan. Sweeps over perception metrics can skip
    /// both.
    pub plan: bool,
    /// Take v* from the scenario's ego rather than the planner config.
    pub desired_speed_from_scenario: bool,
    pub ap_iou: f64,
    pub tau_epa: f64,
    pub epa_alpha: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            perception: Perception::Sensed,
            cooperative: true,
            noise: None,
            nms_iou: DEFAULT_NMS_IOU,
            track_gate: DEFAULT_TRACK_GATE,
            predictor: PredictorKind::Multimodal,
            prediction: PredictorConfig::default(),
            consistency: Some(ConsistencyConfig::default()),
            riskmap: RiskMapConfig::default(),
            planner: PlannerConfig::default(),
            plan: true,
            desired_speed_from_scenario: true,
            ap_iou: DEFAULT_AP_IOU,
            tau_epa: DEFAULT_TAU_EPA,
            epa_alpha: DEFAULT_EPA_ALPHA,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0 && self.ap_iou > 0.0 && self.ap_iou <= 1.0) {
            return Err(Error::Config("IoU thresholds must lie in (0, 1]".into()));
        }
        if !(self.track_gate > 0.0 && self.tau_epa > 0.0 && self.epa_alpha >= 0.0) {
            return Err(Error::Config("track gate and τ_EPA must be positive, α non-negative".into()));
        }
        self.prediction.validate()?;
        if self.plan {
            self.riskmap.validate()?;
            self.planner.validate()?;
        }
        Ok(())
    }
}

/// Scenario-level metrics. Contains nothing that varies between runs with
/// identical inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub template: Option<Template>,
    pub cooperative: bool,
    /// Ground-truth objects at the current frame.
    pub objects: usize,
    pub tracks: usize,
    pub ap: Option<f64>,
    pub recall: Option<f64>,
    pub min_ade: Option<f64>,
    pub min_fde: Option<f64>,
    pub epa: Option<f64>,
    pub tor_before: f64,
    pub tor: f64,
    /// 1 when the planned trajectory hits ground truth, 0 otherwise.
    pub cr: Option<f64>,
    /// Same check for the zero-control rollout.
    pub rollout_cr: Option<f64>,
    pub plan_cost: Option<f64>,
    pub planner_converged: Option<bool>,
    /// Pooled detection scores over the history frames, for batch AP.
    pub detection_scores: Vec<(f64, bool)>,
    pub detection_gt: usize,
    pub matches: MatchResult,
    pub artifacts: BTreeMap<String, String>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Report,
    pub distribution: TrajectoryDistribution,
    pub risk_map: Option<RiskMap>,
    pub plan: Option<Plan>,
    /// Wall-clock milliseconds per stage.
    pub timing: Vec<(String, f64)>,
}

fn in_extent(log: &ScenarioLog, o: &ObjectState) -> bool {
    log.map_extent.contains(o.s, o.l)
}

fn ground_truth_at(log: &ScenarioLog, f: usize) -> Vec<ObjectState> {
    log.frames[f].objects.iter().filter(|o| in_extent(log, o)).copied().collect()
}

fn sensed_streams(log: &ScenarioLog, cfg: &PipelineConfig, history: usize) -> Vec<AgentStream> {
    log.agents
        .iter()
        .filter(|a| cfg.cooperative || a.kind == AgentKind::Ego)
        .map(|agent| {
            let profile = cfg.noise.unwrap_or(agent.noise);
            let frames = (0..history)
                .map(|f| {
                    let scene = SensingScene {
                        frame_index: f,
                        truth: &log.frames[f],
                        occluders: &log.occluders,
                    };
                    sense(agent, &scene, &profile, cfg.seed)
                })
                .collect();
            AgentStream {
                agent_id: agent.id,
                kind: agent.kind,
                delay_ms: profile.delay_ms,
                frames,
            }
        })
        .collect()
}

fn truth_stream(log: &ScenarioLog, history: usize) -> Vec<AgentStream> {
    let ego = log.ego_agent();
    let frames = (0..history)
        .map(|f| {
            ground_truth_at(log, f)
                .iter()
                .map(|o| DetectionBox::from_state(o, ego.id, log.frames[f].t))
                .collect()
        })
        .collect();
    vec![AgentStream {
        agent_id: ego.id,
        kind: AgentKind::Ego,
        delay_ms: 0.0,
        frames,
    }]
}

/// Ground-truth future positions of an object over the next `steps` frames,
/// or `None` if it leaves the log early.
fn gt_future(log: &ScenarioLog, id: u32, steps: usize) -> Option<Vec<[f64; 2]>> {
    let cur = log.current_frame();
    (1..=steps)
        .map(|k| {
            log.frames
                .get(cur + k)?
                .objects
                .iter()
                .find(|o| o.id == id)
                .map(|o| [o.s, o.l])
        })
        .collect()
}

/// Whether a planned path hits ground-truth traffic, checked on the frame
/// grid from the current frame on.
fn path_collides(log: &ScenarioLog, states: &[PlannerState], dt: f64) -> bool {
    let cur = log.current_frame();
    let samples: Vec<[f64; 3]> = states.iter().map(|x| [x.s, x.l, x.phi]).collect();
    let horizon_t = (states.len().saturating_sub(1)) as f64 * dt;
    let count = ((horizon_t / log.meta.dt).floor() as usize + 1).min(log.frames.len() - cur);
    let ego: Vec<Obb> = resample(&samples, dt, log.meta.dt, count)
        .iter()
        .map(|p| Obb::new(p[0], p[1], p[2], log.ego.length, log.ego.width))
        .collect();
    let gt: Vec<Vec<Obb>> = (0..count)
        .map(|k| log.frames[cur + k].objects.iter().map(ObjectState::footprint).collect())
        .collect();
    collides(&ego, &gt)
}

struct Clock {
    start: Instant,
    laps: Vec<(String, f64)>,
}

impl Clock {
    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.laps
            .push((stage.to_string(), (now - self.start).as_secs_f64() * 1e3));
        self.start = now;
    }
}

/// Runs sensing, delay, fusion, tracking, prediction, scene consistency, the
/// risk map, planning and the metrics on one scenario.
pub fn run_pipeline(log: &ScenarioLog, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    log.validate().map_err(|e| e.at(Stage::Scenario))?;
    let mut clock = Clock {
        start: Instant::now(),
        laps: vec![],
    };
    let cur = log.current_frame();
    let history = cur + 1;
    let times: Vec<f64> = log.frames[..history].iter().map(|f| f.t).collect();

    let streams = match cfg.perception {
        Perception::Sensed => sensed_streams(log, cfg, history),
        Perception::GroundTruth => truth_stream(log, history),
    };
    clock.lap(Stage::Sensing);
    let delayed = apply_delay(&streams, &times);
    let fused: Vec<Vec<DetectionBox>> = (0..history)
        .map(|f| {
            let all: Vec<DetectionBox> = delayed.iter().flat_map(|s| s.frames[f].iter().copied()).collect();
            nms_fuse(&all, cfg.nms_iou)
        })
        .collect();
    clock.lap(Stage::Fusion);
    let tracks: Vec<_> = assemble_histories(&fused, &times, cfg.track_gate)
        .into_iter()
        .filter(|t| t.is_current())
        .collect();
    clock.lap(Stage::Tracking);

    let raw = if tracks.is_empty() {
        let modes = match cfg.predictor {
            PredictorKind::Cv => 1,
            PredictorKind::Multimodal => cfg.prediction.mode_count,
        };
        TrajectoryDistribution::empty(modes, cfg.prediction.steps)
    } else {
        predict(cfg.predictor, &tracks, &cfg.prediction).map_err(|e| e.at(Stage::Prediction))?
    };
    let tor_before = trajectory_overlap_rate(&raw);
    let dist = match &cfg.consistency {
        Some(c) => enforce_scene_consistency(&raw, c),
        None => raw,
    };
    let tor = trajectory_overlap_rate(&dist);
    clock.lap(Stage::Prediction);

    let (risk_map, plan, cr, rollout_cr) = if cfg.plan {
        let pose = log.ego_pose();
        let ego = EgoParams {
            position: [pose.x, pose.y],
            heading: pose.heading,
            speed: log.ego.speed,
            mass: log.ego.mass,
        };
        let mut rm_cfg = cfg.riskmap.clone();
        rm_cfg.seed = crate::seed::derive(cfg.seed, &[0x5249_534b]);
        let map = build_risk_map(&dist, &ego, &rm_cfg).map_err(|e| e.at(Stage::RiskMap))?;
        clock.lap(Stage::RiskMap);
        let mut p_cfg = cfg.planner.clone();
        if cfg.desired_speed_from_scenario {
            p_cfg.desired_speed = log.ego.desired_speed;
        }
        let x0 = PlannerState::new(pose.x, log.ego.speed, pose.y, pose.heading);
        let plan = solve_mpc(&x0, &map, &p_cfg).map_err(|e| e.at(Stage::Planning))?;
        let passive = rollout(&x0, &vec![Control::default(); p_cfg.horizon], &p_cfg);
        let cr = path_collides(log, &plan.states, p_cfg.dt);
        let rollout_cr = path_collides(log, &passive, p_cfg.dt);
        clock.lap(Stage::Planning);
        (Some(map), Some(plan), Some(cr as u8 as f64), Some(rollout_cr as u8 as f64))
    } else {
        (None, None, None, None)
    };

    let mut detection_scores = Vec::new();
    let mut detection_gt = 0;
    for (f, dets) in fused.iter().enumerate() {
        let gt = ground_truth_at(log, f);
        detection_scores.extend(score_detections(dets, &gt, cfg.ap_iou));
        detection_gt += gt.len();
    }
    let gt_now = ground_truth_at(log, cur);
    let current: Vec<DetectionBox> = tracks
        .iter()
        .map(|t| t.boxes.last().copied().flatten().expect("current tracks end with a box"))
        .collect();
    let assignment = greedy_match(&current, &gt_now, cfg.ap_iou);
    let mut matches = MatchResult::from_assignment(&assignment, gt_now.len());
    let mut ade_fde = Vec::new();
    for (k, &(d, g)) in matches.pairs.iter().enumerate() {
        if let Some(future) = gt_future(log, gt_now[g].id, dist.steps) {
            if let Some((ade, fde)) = object_min_ade_fde(&dist, d, &future) {
                matches.pair_min_fde[k] = Some(fde);
                ade_fde.push((ade, fde));
            }
        }
    }
    let mean = |f: fn(&(f64, f64)) -> f64| {
        (!ade_fde.is_empty()).then(|| ade_fde.iter().map(f).sum::<f64>() / ade_fde.len() as f64)
    };
    let report = Report {
        seed: log.meta.seed,
        template: log.meta.template,
        cooperative: cfg.cooperative,
        objects: gt_now.len(),
        tracks: tracks.len(),
        ap: ap_from_scores(&detection_scores, detection_gt),
        recall: matches.recall(),
        min_ade: mean(|p| p.0),
        min_fde: mean(|p| p.1),
        epa: epa(&matches, cfg.tau_epa, cfg.epa_alpha),
        tor_before,
        tor,
        cr,
        rollout_cr,
        plan_cost: plan.as_ref().map(Plan::final_cost),
        planner_converged: plan.as_ref().map(|p| p.converged),
        detection_scores,
        detection_gt,
        matches,
        artifacts: BTreeMap::new(),
    };
    clock.lap(Stage::Metrics);
    Ok(PipelineOutput {
        report,
        distribution: dist,
        risk_map,
        plan,
        timing: clock.laps,
    })
}

/// Batch-level metrics: AP and recall pooled over all detections, the rest
/// averaged over scenarios that define them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenarios: usize,
    pub ap: Option<f64>,
    pub recall: Option<f64>,
    pub min_ade: Option<f64>,
    pub min_fde: Option<f64>,
    pub epa: Option<f64>,
    pub tor_before: Option<f64>,
    pub tor: Option<f64>,
    pub cr: Option<f64>,
    pub rollout_cr: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl Summary {
    pub fn of(reports: &[Report]) -> Self {
        let scores: Vec<(f64, bool)> = reports.iter().flat_map(|r| r.detection_scores.iter().copied()).collect();
        let gt: usize = reports.iter().map(|r| r.detection_gt).sum();
        let (tp, n_gt) = reports.iter().fold((0, 0), |(tp, n), r| {
            (tp + r.matches.pairs.len(), n + r.matches.gt_count())
        });
        Self {
            scenarios: reports.len(),
            ap: ap_from_scores(&scores, gt),
            recall: (n_gt > 0).then(|| tp as f64 / n_gt as f64),
            min_ade: mean_of(reports.iter().map(|r| r.min_ade)),
            min_fde: mean_of(reports.iter().map(|r| r.min_fde)),
            epa: mean_of(reports.iter().map(|r| r.epa)),
            tor_before: mean_of(reports.iter().map(|r| Some(r.tor_before))),
            tor: mean_of(reports.iter().map(|r| Some(r.tor))),
            cr: mean_of(reports.iter().map(|r| r.cr)),
            rollout_cr: mean_of(reports.iter().map(|r| r.rollout_cr)),
        }
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Ap => self.ap,
            Metric::Recall => self.recall,
            Metric::MinAde => self.min_ade,
            Metric::MinFde => self.min_fde,
            Metric::Epa => self.epa,
            Metric::Tor => self.tor,
            Metric::Cr => self.cr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Ap,
    Recall,
    MinAde,
    MinFde,
    Epa,
    Tor,
    Cr,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ap => "ap",
            Metric::Recall => "recall",
            Metric::MinAde => "minade",
            Metric::MinFde => "minfde",
            Metric::Epa => "epa",
            Metric::Tor => "tor",
            Metric::Cr => "cr",
        }
    }

    pub fn needs_planning(self) -> bool {
        self == Metric::Cr
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ap" => Metric::Ap,
            "recall" => Metric::Recall,
            "minade" | "min-ade" => Metric::MinAde,
            "minfde" | "min-fde" => Metric::MinFde,
            "epa" => Metric::Epa,
            "tor" => Metric::Tor,
            "cr" => Metric::Cr,
            other => return Err(Error::Config(format!("unknown metric '{other}'"))),
        })
    }
}

/// Which noise parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseAxis {
    Pos,
    Heading,
    Dropout,
    Delay,
}

impl NoiseAxis {
    pub fn name(self) -> &'static str {
        match self {
            NoiseAxis::Pos => "pos",
            NoiseAxis::Heading => "heading",
            NoiseAxis::Dropout => "dropout",
            NoiseAxis::Delay => "delay",
        }
    }

    /// `base` with this axis set to `level`; heading levels are degrees.
    pub fn apply(self, base: NoiseProfile, level: f64) -> NoiseProfile {
        let mut p = base;
        match self {
            NoiseAxis::Pos => p.pos_sigma = level,
            NoiseAxis::Heading => p.heading_sigma = level.to_radians(),
            NoiseAxis::Dropout => p.dropout_prob = level,
            NoiseAxis::Delay => p.delay_ms = level,
        }
        p
    }
}

/// A sweep axis with its levels, parsed from `axis=start:stop:step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid {
    pub axis: NoiseAxis,
    pub levels: Vec<f64>,
}

impl FromStr for NoiseGrid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("noise grid '{s}' is not axis=start:stop:step"));
        let (axis, range) = s.split_once('=').ok_or_else(bad)?;
        let axis = match axis.trim() {
            "pos" => NoiseAxis::Pos,
            "heading" => NoiseAxis::Heading,
            "dropout" => NoiseAxis::Dropout,
            "delay" => NoiseAxis::Delay,
            other => return Err(Error::Config(format!("unknown noise axis '{other}'"))),
        };
        let parts: Vec<f64> = range
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(Error::Config(format!("noise grid '{s}' needs step > 0 and stop ≥ start")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        let levels = (0..=n)
            .map(|i| {
                let v = start + i as f64 * step;
                (v * 1e9).round() / 1e9
            })
            .collect();
        Ok(Self { axis, levels })
    }
}

/// Scenarios `seed..seed + count` generated from a template.
pub fn scenario_batch(template: Template, density: usize, seed: u64, count: usize) -> Result<Vec<ScenarioLog>> {
    (0..count as u64)
        .map(|i| generate_scenario(template, density, seed + i).map_err(|e| e.at(Stage::Scenario)))
        .collect()
}

/// Runs the batch under `cfg`, each scenario with its own seed.
pub fn run_batch(logs: &[ScenarioLog], cfg: &PipelineConfig) -> Result<Vec<Report>> {
    logs.iter()
        .map(|log| {
            let mut c = cfg.clone();
            c.seed = crate::seed::derive(cfg.seed, &[log.meta.seed]);
            run_pipeline(log, &c).map(|o| o.report)
        })
        .collect()
}

/// Batch summaries at each level of the noise grid.
pub fn sweep(logs: &[ScenarioLog], cfg: &PipelineConfig, grid: &NoiseGrid) -> Result<Vec<(f64, Summary)>> {
    let base = cfg.noise.unwrap_or_default();
    grid.levels
        .iter()
        .map(|&level| {
            let c = PipelineConfig {
                noise: Some(grid.axis.apply(base, level)),
                ..cfg.clone()
            };
            Ok((level, Summary::of(&run_batch(logs, &c)?)))
        })
        .collect()
}
