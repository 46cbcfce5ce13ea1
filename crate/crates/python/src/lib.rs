//! Python bindings for the cooperrisk engine.
//!
//! ```text
//! import cooperrisk_py as cr
//! log = cr.Scenario.generate("crossing", density=3, seed=1)
//! out = cr.run_pipeline(log, seed=1)
//! print(out.report["ap"], out.risk_map.max_value())
//! ```

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use cooperrisk::eval::{ap_from_scores, MatchResult, Perception, PipelineConfig};
use cooperrisk::fusion::NoiseProfile;
use cooperrisk::planner::{GradientMode, PlannerConfig, PlannerState};
use cooperrisk::prediction::PredictorKind;
use cooperrisk::riskmap::{self, EgoHypothesis, RiskCoeffs};
use cooperrisk::scenario::{self, ObjectClass, ObjectState, ScenarioLog, Template};

fn err(e: cooperrisk::Error) -> PyErr {
    if e.is_config() || matches!(e, cooperrisk::Error::Invalid(_)) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown {what} '{s}'")))
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A scenario log: ground truth plus the sensing agents.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    log: ScenarioLog,
}

#[pymethods]
impl PyScenario {
    /// Generate a seeded scenario from one of the templates
    /// (crossing, merge, roundabout, straight).
    #[staticmethod]
    #[pyo3(signature = (template="crossing", density=3, seed=0))]
    fn generate(template: &str, density: usize, seed: u64) -> PyResult<Self> {
        let t: Template = parse("template", template)?;
        Ok(Self {
            log: scenario::generate_scenario(t, density, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            log: ScenarioLog::from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            log: ScenarioLog::load(path).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.log.to_json().map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.log.save(path).map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.log.meta.seed
    }

    #[getter]
    fn frame_count(&self) -> usize {
        self.log.frames.len()
    }

    #[getter]
    fn current_frame(&self) -> usize {
        self.log.current_frame()
    }

    /// Ground-truth objects at frame `index` as a list of dicts.
    fn objects<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyAny>> {
        let frame = self
            .log
            .frames
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("frame {index} out of range")))?;
        to_py(py, &frame.objects)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(template={:?}, seed={}, frames={})",
            self.log.meta.template.map(|t| t.to_string()),
            self.log.meta.seed,
            self.log.frames.len()
        )
    }
}

/// Layered risk raster, one layer per prediction step plus the current one.
#[pyclass(name = "RiskMap", from_py_object)]
#[derive(Clone)]
struct PyRiskMap {
    map: riskmap::RiskMap,
}

#[pymethods]
impl PyRiskMap {
    /// Read a binary risk map written by the CLI.
    #[staticmethod]
    #[pyo3(signature = (path, dt=0.5))]
    fn load(path: &str, dt: f64) -> PyResult<Self> {
        Ok(Self {
            map: riskmap::read_binary(path, dt).map_err(err)?,
        })
    }

    /// Build from nested lists `layers[t][j][i]` (row j is y, column i is x).
    #[staticmethod]
    #[pyo3(signature = (layers, origin, resolution, dt=0.5))]
    fn from_layers(layers: Vec<Vec<Vec<f64>>>, origin: (f64, f64), resolution: f64, dt: f64) -> PyResult<Self> {
        let height = layers.first().map_or(0, Vec::len);
        let width = layers.first().and_then(|l| l.first()).map_or(0, Vec::len);
        let grid = riskmap::GridSpec::new([origin.0, origin.1], resolution, width, height).map_err(err)?;
        let mut map = riskmap::RiskMap::zeros(grid, layers.len(), dt);
        for (dst, src) in map.layers.iter_mut().zip(&layers) {
            if src.len() != height || src.iter().any(|r| r.len() != width) {
                return Err(PyValueError::new_err("layers must share one rectangular shape"));
            }
            *dst = src.iter().flatten().copied().collect();
        }
        map.validate().map_err(err)?;
        Ok(Self { map })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        riskmap::write_binary(&self.map, path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.map.grid.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.map.grid.height
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.map.grid.resolution
    }

    #[getter]
    fn origin(&self) -> (f64, f64) {
        (self.map.grid.origin[0], self.map.grid.origin[1])
    }

    #[getter]
    fn layer_count(&self) -> usize {
        self.map.layer_count()
    }

    /// Layer `t` as rows of values, row j at y = origin_y + j·resolution.
    fn layer(&self, t: usize) -> PyResult<Vec<Vec<f64>>> {
        let layer = self
            .map
            .layers
            .get(t)
            .ok_or_else(|| PyValueError::new_err(format!("layer {t} out of range")))?;
        Ok(layer.chunks(self.map.grid.width).map(<[f64]>::to_vec).collect())
    }

    /// Bilinear value at (x, y), or None outside the grid.
    fn sample(&self, t: usize, x: f64, y: f64) -> Option<f64> {
        self.map.sample(t, x, y).map(|(v, _)| v)
    }

    fn max_value(&self) -> f64 {
        self.map.max_value()
    }

    fn __repr__(&self) -> String {
        format!(
            "RiskMap({}x{} @ {} m, {} layers)",
            self.map.grid.width,
            self.map.grid.height,
            self.map.grid.resolution,
            self.map.layer_count()
        )
    }
}

/// An optimised ego plan.
#[pyclass(name = "Plan", get_all)]
struct PyPlan {
    /// `(s, v, l, phi)` for steps 0..K.
    states: Vec<(f64, f64, f64, f64)>,
    /// `(a, delta)` for steps 0..K-1.
    controls: Vec<(f64, f64)>,
    cost_history: Vec<f64>,
    converged: bool,
}

impl PyPlan {
    fn new(p: &cooperrisk::planner::Plan) -> Self {
        Self {
            states: p.states.iter().map(|x| (x.s, x.v, x.l, x.phi)).collect(),
            controls: p.controls.iter().map(|u| (u.a, u.delta)).collect(),
            cost_history: p.cost_history.clone(),
            converged: p.converged,
        }
    }
}

#[pymethods]
impl PyPlan {
    fn final_cost(&self) -> f64 {
        *self.cost_history.last().unwrap_or(&f64::NAN)
    }
}

/// Result of one pipeline run.
#[pyclass(name = "PipelineResult", get_all)]
struct PyPipelineResult {
    report: Py<PyAny>,
    risk_map: Option<Py<PyRiskMap>>,
    plan: Option<Py<PyPlan>>,
    /// Trajectory distribution as a dict.
    distribution: Py<PyAny>,
}

#[pyfunction]
fn pseudo_rotate(s: f64, l: f64, heading: f64) -> (f64, f64) {
    let [a, b] = scenario::pseudo_rotate([s, l], heading);
    (a, b)
}

#[pyfunction]
fn severity_delta_v(mass_a: f64, speed_a: f64, mass_b: f64, speed_b: f64, alpha: f64) -> f64 {
    riskmap::severity_delta_v(mass_a, speed_a, mass_b, speed_b, alpha)
}

/// Risk of an ego at `ego = (s, l, heading, speed)` towards a vehicle at
/// `other = (s, l, heading, speed)`, with the default coefficients.
#[pyfunction]
#[pyo3(signature = (ego, other, ego_mass=1500.0, other_mass=1500.0))]
fn risk_value(ego: (f64, f64, f64, f64), other: (f64, f64, f64, f64), ego_mass: f64, other_mass: f64) -> f64 {
    let e = EgoHypothesis {
        s: ego.0,
        l: ego.1,
        heading: ego.2,
        speed: ego.3,
        mass: ego_mass,
    };
    let o = ObjectState {
        mass: other_mass,
        ..ObjectState::new(0, ObjectClass::Vehicle, other.0, other.1, other.2, other.3)
    };
    riskmap::risk_value(&e, &o, &RiskCoeffs::default())
}

/// Run the full pipeline on a scenario.
///
/// `noise` overrides every agent's profile, e.g. "pos=0.4,heading=2,delay=100".
#[pyfunction]
#[pyo3(signature = (
    scenario, seed=0, noise=None, predictor="multimodal", cooperative=true, ground_truth=false,
    consistency=true, plan=true, planner_iters=None, gradient_mode=None, samples=None,
))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    py: Python<'_>,
    scenario: &PyScenario,
    seed: u64,
    noise: Option<&str>,
    predictor: &str,
    cooperative: bool,
    ground_truth: bool,
    consistency: bool,
    plan: bool,
    planner_iters: Option<usize>,
    gradient_mode: Option<&str>,
    samples: Option<usize>,
) -> PyResult<PyPipelineResult> {
    let mut cfg = PipelineConfig {
        seed,
        cooperative,
        plan,
        predictor: parse::<PredictorKind>("predictor", predictor)?,
        noise: noise.map(|n| n.parse::<NoiseProfile>()).transpose().map_err(err)?,
        perception: if ground_truth {
            Perception::GroundTruth
        } else {
            Perception::Sensed
        },
        ..Default::default()
    };
    if !consistency {
        cfg.consistency = None;
    }
    if let Some(i) = planner_iters {
        cfg.planner.iterations = i;
    }
    if let Some(g) = gradient_mode {
        cfg.planner.gradient_mode = parse::<GradientMode>("gradient mode", g)?;
    }
    if let Some(s) = samples {
        cfg.riskmap.samples = s;
    }
    let log = scenario.log.clone();
    let out = py.detach(move || cooperrisk::eval::run_pipeline(&log, &cfg)).map_err(err)?;
    Ok(PyPipelineResult {
        report: to_py(py, &out.report)?.unbind(),
        distribution: to_py(py, &out.distribution)?.unbind(),
        risk_map: out.risk_map.map(|map| Py::new(py, PyRiskMap { map })).transpose()?,
        plan: out.plan.as_ref().map(|p| Py::new(py, PyPlan::new(p))).transpose()?,
    })
}

/// Plan from `(s, v, l, phi)` over a risk map.
#[pyfunction]
#[pyo3(signature = (risk_map, start, desired_speed=10.0, iterations=100, gradient_mode="analytic-standard", horizon=10))]
fn solve_mpc(
    py: Python<'_>,
    risk_map: &PyRiskMap,
    start: (f64, f64, f64, f64),
    desired_speed: f64,
    iterations: usize,
    gradient_mode: &str,
    horizon: usize,
) -> PyResult<PyPlan> {
    let cfg = PlannerConfig {
        desired_speed,
        iterations,
        horizon,
        gradient_mode: parse("gradient mode", gradient_mode)?,
        ..Default::default()
    };
    let x0 = PlannerState::new(start.0, start.1, start.2, start.3);
    let map = &risk_map.map;
    let plan = py.detach(|| cooperrisk::planner::solve_mpc(&x0, map, &cfg)).map_err(err)?;
    Ok(PyPlan::new(&plan))
}

/// Error-aware perception accuracy from per-pair minFDE values (None where
/// no future is known). Returns None without ground truth.
#[pyfunction]
#[pyo3(signature = (pair_min_fde, false_positives, false_negatives, tau=2.0, alpha=0.5))]
fn epa(
    pair_min_fde: Vec<Option<f64>>,
    false_positives: usize,
    false_negatives: usize,
    tau: f64,
    alpha: f64,
) -> Option<f64> {
    let m = MatchResult {
        pairs: (0..pair_min_fde.len()).map(|i| (i, i)).collect(),
        false_positives,
        false_negatives,
        pair_min_fde,
    };
    cooperrisk::eval::epa(&m, tau, alpha)
}

/// Average precision from `(confidence, is_true_positive)` pairs.
#[pyfunction]
fn average_precision(scores: Vec<(f64, bool)>, gt_count: usize) -> Option<f64> {
    ap_from_scores(&scores, gt_count)
}

#[pymodule]
fn cooperrisk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRiskMap>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyPipelineResult>()?;
    m.add_function(wrap_pyfunction!(pseudo_rotate, m)?)?;
    m.add_function(wrap_pyfunction!(severity_delta_v, m)?)?;
    m.add_function(wrap_pyfunction!(risk_value, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mpc, m)?)?;
    m.add_function(wrap_pyfunction!(epa, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    Ok(())
}
