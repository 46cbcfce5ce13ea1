//! Risk-aware model-predictive planner: projected gradient descent on the
//! control sequence of a kinematic bicycle model.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::riskmap::RiskMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlannerState {
    pub s: f64,
    pub v: f64,
    pub l: f64,
    pub phi: f64,
}

impl PlannerState {
    pub fn new(s: f64, v: f64, l: f64, phi: f64) -> Self {
        Self { s, v, l, phi }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s, self.v, self.l, self.phi]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub a: f64,
    pub delta: f64,
}

impl Control {
    pub fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Cost-scaled Jacobian-transpose terms.
    AsWritten,
    /// Exact gradient by reverse accumulation through the rollout.
    #[default]
    AnalyticStandard,
    /// Central differences, for testing.
    FiniteDifference,
}

impl FromStr for GradientMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-written" => Ok(Self::AsWritten),
            "analytic-standard" | "analytic" => Ok(Self::AnalyticStandard),
            "finite-difference" | "fd" => Ok(Self::FiniteDifference),
            other => Err(Error::Config(format!("unknown gradient mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for GradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AsWritten => "as-written",
            Self::AnalyticStandard => "analytic-standard",
            Self::FiniteDifference => "finite-difference",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Control horizon K (steps).
    pub horizon: usize,
    pub dt: f64,
    /// Front-to-rear axle distance (m).
    pub wheelbase: f64,
    /// Tracking weights, row-major.
    pub q: [[f64; 4]; 4],
    pub desired_speed: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub a_max: f64,
    pub delta_max: f64,
    pub gradient_mode: GradientMode,
    /// Halve the step until the cost does not increase, at most this often.
    pub max_halvings: usize,
    /// Risk charged per state outside the map.
    pub boundary_penalty: f64,
    /// Reuse the last risk layer for steps past the map's horizon; zero risk
    /// otherwise.
    pub persist_last_layer: bool,
    /// Constant-control sequences tried as starting points besides zero.
    pub warm_starts: Vec<Control>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.5,
            wheelbase: 2.8,
            q: diag([0.001, 0.01, 0.03, 0.3]),
            desired_speed: 10.0,
            iterations: 100,
            step_size: 0.05,
            a_max: 3.0,
            delta_max: 0.5,
            gradient_mode: GradientMode::AnalyticStandard,
            max_halvings: 12,
            boundary_penalty: 100.0,
            persist_last_layer: true,
            warm_starts: vec![Control::new(-3.0, 0.0), Control::new(2.0, 0.0)],
        }
    }
}

pub fn diag(d: [f64; 4]) -> [[f64; 4]; 4] {
    let mut q = [[0.0; 4]; 4];
    for i in 0..4 {
        q[i][i] = d[i];
    }
    q
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.iterations == 0 {
            return Err(Error::Config("planner horizon and iterations must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.wheelbase > 0.0 && self.step_size > 0.0) {
            return Err(Error::Config("planner dt, wheelbase and step size must be positive".into()));
        }
        if !(self.a_max >= 0.0 && self.delta_max >= 0.0 && self.desired_speed >= 0.0) {
            return Err(Error::Config("planner bounds and desired speed must be non-negative".into()));
        }
        for i in 0..4 {
            if self.q[i][i] < 0.0 || (0..4).any(|j| (self.q[i][j] - self.q[j][i]).abs() > 1e-12) {
                return Err(Error::Config("Q must be symmetric with a non-negative diagonal".into()));
            }
        }
        Ok(())
    }

    fn quad(&self, e: [f64; 4]) -> f64 {
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                acc += e[i] * self.q[i][j] * e[j];
            }
        }
        acc
    }

    fn q_times(&self, e: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.q[i][j] * e[j]).sum();
        }
        out
    }
}

/// One step of the bicycle model, linearised about the state's own speed.
pub fn dynamics_step(x: &PlannerState, u: &Control, cfg: &PlannerConfig) -> PlannerState {
    let dt = cfg.dt;
    PlannerState {
        s: x.s + dt * x.v,
        v: x.v + dt * u.a,
        l: x.l + dt * x.v * x.phi,
        phi: x.phi + dt * x.v / cfg.wheelbase * u.delta,
    }
}

/// Tracking target at step `k`: constant cruise at `v*` along the lane
/// centre from `s0`.
pub fn desired_state(k: usize, cfg: &PlannerConfig, s0: f64) -> PlannerState {
    PlannerState::new(s0 + k as f64 * cfg.dt * cfg.desired_speed, cfg.desired_speed, 0.0, 0.0)
}

/// States `X_0..X_K` produced by the controls.
pub fn rollout(x0: &PlannerState, controls: &[Control], cfg: &PlannerConfig) -> Vec<PlannerState> {
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(*x0);
    for u in controls {
        let next = dynamics_step(out.last().expect("non-empty"), u, cfg);
        out.push(next);
    }
    out
}

/// Risk-map layer read at planner step `k`, or `None` when past the map
/// and persistence is off.
fn layer_for(k: usize, map: &RiskMap, cfg: &PlannerConfig) -> Option<usize> {
    if map.layers.is_empty() {
        return None;
    }
    let t = k as f64 * cfg.dt;
    let idx = if map.dt > 0.0 { (t / map.dt).round() as usize } else { 0 };
    if idx < map.layer_count() {
        Some(idx)
    } else if cfg.persist_last_layer {
        Some(map.layer_count() - 1)
    } else {
        None
    }
}

/// Risk and its `(∂/∂s, ∂/∂l)` at a state for planner step `k`.
pub fn risk_at(map: &RiskMap, k: usize, x: &PlannerState, cfg: &PlannerConfig) -> (f64, [f64; 2]) {
    match layer_for(k, map, cfg) {
        None => (0.0, [0.0, 0.0]),
        Some(layer) => map
            .sample(layer, x.s, x.l)
            .unwrap_or((cfg.boundary_penalty, [0.0, 0.0])),
    }
}

fn tracking_error(x: &PlannerState, k: usize, cfg: &PlannerConfig, s0: f64) -> [f64; 4] {
    let d = desired_state(k, cfg, s0);
    [x.s - d.s, x.v - d.v, x.l - d.l, x.phi - d.phi]
}

/// Cost of a trajectory: risk plus quadratic tracking over steps
/// `0..K`. Any state past `K − 1` is ignored.
pub fn plan_cost(trajectory: &[PlannerState], map: &RiskMap, cfg: &PlannerConfig) -> f64 {
    let Some(first) = trajectory.first() else {
        return 0.0;
    };
    trajectory
        .iter()
        .take(cfg.horizon)
        .enumerate()
        .map(|(k, x)| risk_at(map, k, x, cfg).0 + cfg.quad(tracking_error(x, k, cfg, first.s)))
        .sum()
}

pub fn controls_cost(x0: &PlannerState, controls: &[Control], map: &RiskMap, cfg: &PlannerConfig) -> f64 {
    plan_cost(&rollout(x0, controls, cfg), map, cfg)
}

fn cost_gradient(x: &PlannerState, k: usize, map: &RiskMap, cfg: &PlannerConfig, s0: f64) -> [f64; 4] {
    let (_, [gs, gl]) = risk_at(map, k, x, cfg);
    let qe = cfg.q_times(tracking_error(x, k, cfg, s0));
    [gs + 2.0 * qe[0], 2.0 * qe[1], gl + 2.0 * qe[2], 2.0 * qe[3]]
}

fn analytic_gradient(x0: &PlannerState, controls: &[Control], map: &RiskMap, cfg: &PlannerConfig) -> Vec<Control> {
    let xs = rollout(x0, controls, cfg);
    let k_max = controls.len();
    let dt = cfg.dt;
    let mut grad = vec![Control::default(); k_max];
    // Adjoint of X_{k+1}; X_K carries no cost.
    let mut lam = [0.0; 4];
    for k in (0..k_max).rev() {
        let xk = &xs[k];
        let next = k + 1;
        if next < cfg.horizon.min(xs.len()) {
            let g = cost_gradient(&xs[next], next, map, cfg, x0.s);
            for i in 0..4 {
                lam[i] += g[i];
            }
        }
        grad[k] = Control::new(dt * lam[1], dt * xk.v / cfg.wheelbase * lam[3]);
        // λ_k = A_kᵀ λ_{k+1} with the full Jacobian of the step.
        let u = &controls[k];
        lam = [
            lam[0],
            dt * lam[0] + lam[1] + dt * xk.phi * lam[2] + dt * u.delta / cfg.wheelbase * lam[3],
            lam[2],
            dt * xk.v * lam[2] + lam[3],
        ];
    }
    grad
}

fn as_written_gradient(x0: &PlannerState, controls: &[Control], map: &RiskMap, cfg: &PlannerConfig) -> Vec<Control> {
    let xs = rollout(x0, controls, cfg);
    let dt = cfg.dt;
    controls
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let x = &xs[k + 1];
            let (v, [gs, gl]) = risk_at(map, k + 1, x, cfg);
            let e = tracking_error(x, k + 1, cfg, x0.s);
            let qe = cfg.q_times(e);
            let scale = cfg.quad(e);
            let term = [gs * v + qe[0] * scale, qe[1] * scale, gl * v + qe[2] * scale, qe[3] * scale];
            Control::new(dt * term[1], dt * xs[k].v / cfg.wheelbase * term[3])
        })
        .collect()
}

pub fn finite_difference_gradient(
    x0: &PlannerState,
    controls: &[Control],
    map: &RiskMap,
    cfg: &PlannerConfig,
    h: f64,
) -> Vec<Control> {
    let mut work = controls.to_vec();
    let mut out = vec![Control::default(); controls.len()];
    for k in 0..controls.len() {
        for c in 0..2 {
            let base = if c == 0 { controls[k].a } else { controls[k].delta };
            let mut eval = |x: f64| {
                if c == 0 {
                    work[k].a = x;
                } else {
                    work[k].delta = x;
                }
                controls_cost(x0, &work, map, cfg)
            };
            let d = (eval(base + h) - eval(base - h)) / (2.0 * h);
            eval(base);
            if c == 0 {
                out[k].a = d;
            } else {
                out[k].delta = d;
            }
        }
    }
    out
}

/// `∂J/∂U` (or its stand-in) under the configured mode.
pub fn gradient(x0: &PlannerState, controls: &[Control], map: &RiskMap, cfg: &PlannerConfig) -> Vec<Control> {
    match cfg.gradient_mode {
        GradientMode::AnalyticStandard => analytic_gradient(x0, controls, map, cfg),
        GradientMode::AsWritten => as_written_gradient(x0, controls, map, cfg),
        GradientMode::FiniteDifference => finite_difference_gradient(x0, controls, map, cfg, 1e-5),
    }
}

/// Clamp controls to their box and keep the rolled-out speed non-negative.
pub fn project(x0: &PlannerState, controls: &mut [Control], cfg: &PlannerConfig) {
    let mut x = *x0;
    for u in controls.iter_mut() {
        u.a = u.a.clamp(-cfg.a_max, cfg.a_max);
        u.delta = u.delta.clamp(-cfg.delta_max, cfg.delta_max);
        let floor = -x.v.max(0.0) / cfg.dt;
        if u.a < floor {
            u.a = floor;
        }
        x = dynamics_step(&x, u, cfg);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// `X_0..X_K`.
    pub states: Vec<PlannerState>,
    pub controls: Vec<Control>,
    /// Cost before the first and after every iteration.
    pub cost_history: Vec<f64>,
    /// False when the cost did not decrease over the last quarter of the
    /// iterations while the gradient was still non-negligible.
    pub converged: bool,
    /// Index of the winning start: 0 for zero controls, then the warm starts.
    pub start: usize,
}

impl Plan {
    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("history is never empty")
    }
}

fn norm(g: &[Control]) -> f64 {
    g.iter().map(|c| c.a * c.a + c.delta * c.delta).sum::<f64>().sqrt()
}

/// Projected gradient descent from a given control sequence.
pub fn descend(x0: &PlannerState, initial: Vec<Control>, map: &RiskMap, cfg: &PlannerConfig) -> Plan {
    let mut u = initial;
    project(x0, &mut u, cfg);
    let mut cost = controls_cost(x0, &u, map, cfg);
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    history.push(cost);
    let mut last_grad_norm = 0.0;
    for _ in 0..cfg.iterations {
        let g = gradient(x0, &u, map, cfg);
        last_grad_norm = norm(&g);
        let mut step = cfg.step_size;
        for _ in 0..=cfg.max_halvings {
            let mut trial: Vec<Control> = u
                .iter()
                .zip(&g)
                .map(|(c, d)| Control::new(c.a - step * d.a, c.delta - step * d.delta))
                .collect();
            project(x0, &mut trial, cfg);
            let trial_cost = controls_cost(x0, &trial, map, cfg);
            if trial_cost <= cost {
                u = trial;
                cost = trial_cost;
                break;
            }
            step *= 0.5;
        }
        history.push(cost);
    }
    let quarter = (cfg.iterations / 4).max(1);
    let reference = history[history.len() - 1 - quarter];
    let stalled = !(cost < reference) && last_grad_norm > 1e-6 && cost > 0.0;
    Plan {
        states: rollout(x0, &u, cfg),
        controls: u,
        cost_history: history,
        converged: !stalled,
        start: 0,
    }
}

/// Plan from `x0`: descend from zero controls and from each warm start, and
/// keep the cheapest result (earliest on ties).
pub fn solve_mpc(x0: &PlannerState, map: &RiskMap, cfg: &PlannerConfig) -> Result<Plan> {
    cfg.validate()?;
    if ![x0.s, x0.v, x0.l, x0.phi].iter().all(|v| v.is_finite()) || x0.v < 0.0 {
        return Err(Error::Invalid("initial planner state must be finite with v ≥ 0".into()));
    }
    if !map.grid.contains(x0.s, x0.l) {
        return Err(Error::Invalid("initial planner state lies outside the risk map".into()));
    }
    let k = cfg.horizon;
    let mut best = descend(x0, vec![Control::default(); k], map, cfg);
    for (i, warm) in cfg.warm_starts.iter().enumerate() {
        let mut plan = descend(x0, vec![*warm; k], map, cfg);
        if plan.final_cost() < best.final_cost() {
            plan.start = i + 1;
            best = plan;
        }
    }
    Ok(best)
}

/// Trajectory CSV: `t,s,v,l,phi,a,delta`, one row per state; the final
/// state has no control.
pub fn write_plan_csv(plan: &Plan, dt: f64, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,s,v,l,phi,a,delta")?;
    for (k, x) in plan.states.iter().enumerate() {
        let (a, d) = plan
            .controls
            .get(k)
            .map(|u| (u.a.to_string(), u.delta.to_string()))
            .unwrap_or_default();
        writeln!(f, "{},{},{},{},{},{},{}", k as f64 * dt, x.s, x.v, x.l, x.phi, a, d)?;
    }
    f.flush()?;
    Ok(())
}
