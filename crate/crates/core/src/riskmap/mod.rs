//! Risk maps: per-timestamp rasters of expected risk over candidate ego
//! positions.

pub mod field;
mod io;

pub use field::{
    exposure_offsets, hierarchical_risk, hierarchical_risk_stats, hierarchical_risk_with,
    risk_value, severity_delta_v, standard_draws, EgoHypothesis, GaussianComponent, RiskCoeffs,
};
pub use io::{from_bytes, read_binary, to_bytes, write_binary, write_csv_layers, MAGIC, VERSION};

use serde::{Deserialize, Serialize};

use crate::prediction::TrajectoryDistribution;
use crate::scenario::{pseudo_rotate, Extent};
use crate::{seed, Error, Result};

pub const DEFAULT_RESOLUTION: f64 = 0.5;
pub const DEFAULT_SAMPLES: usize = 64;

/// Regular grid of sample nodes. Node `(i, j)` sits at
/// `origin + (i, j)·resolution`; rasters are stored row-major with `j` as
/// the row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(origin: [f64; 2], resolution: f64, width: usize, height: usize) -> Result<Self> {
        let g = Self {
            origin,
            resolution,
            width,
            height,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid whose nodes start at the lower-left corner of `extent` and stay
    /// inside it.
    pub fn covering(extent: Extent, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Config(format!("grid resolution must be positive, got {resolution}")));
        }
        let nodes = |span: f64| (span / resolution + 1e-9).floor() as usize + 1;
        Self::new(
            [extent.x_min, extent.y_min],
            resolution,
            nodes(extent.x_max - extent.x_min),
            nodes(extent.y_max - extent.y_min),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Config(format!(
                "grid resolution must be positive, got {}",
                self.resolution
            )));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::Config("grid needs at least 2×2 nodes".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.resolution,
            self.origin[1] + j as f64 * self.resolution,
        ]
    }

    pub fn x_max(&self) -> f64 {
        self.origin[0] + (self.width - 1) as f64 * self.resolution
    }

    pub fn y_max(&self) -> f64 {
        self.origin[1] + (self.height - 1) as f64 * self.resolution
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.origin[0] && x <= self.x_max() && y >= self.origin[1] && y <= self.y_max()
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::covering(Extent::EVALUATION, DEFAULT_RESOLUTION).expect("evaluation extent is valid")
    }
}

/// How the ego hypothesis at a query cell is oriented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadingPolicy {
    /// The ego's current heading everywhere.
    #[default]
    Current,
    /// Pointing from the ego's current position to the cell.
    TowardCell,
}

/// How contributions of participants and modes combine in a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accumulation {
    #[default]
    Sum,
    Max,
}

/// Ego kinematics shared by every query cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoParams {
    pub position: [f64; 2],
    pub heading: f64,
    pub speed: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMapConfig {
    pub grid: GridSpec,
    pub coeffs: RiskCoeffs,
    pub samples: usize,
    pub seed: u64,
    pub heading_policy: HeadingPolicy,
    pub accumulation: Accumulation,
}

impl Default for RiskMapConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            coeffs: RiskCoeffs::default(),
            samples: DEFAULT_SAMPLES,
            seed: 0,
            heading_policy: HeadingPolicy::Current,
            accumulation: Accumulation::Sum,
        }
    }
}

impl RiskMapConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.coeffs.validate()?;
        if self.samples == 0 {
            return Err(Error::Config("risk map needs at least one sample".into()));
        }
        Ok(())
    }
}

/// Stack of risk rasters, layer `t` for `t·dt` seconds after the current
/// frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMap {
    pub grid: GridSpec,
    pub dt: f64,
    pub coeffs: RiskCoeffs,
    pub layers: Vec<Vec<f64>>,
}

impl RiskMap {
    pub fn zeros(grid: GridSpec, layers: usize, dt: f64) -> Self {
        Self {
            grid,
            dt,
            coeffs: RiskCoeffs::default(),
            layers: vec![vec![0.0; grid.cells()]; layers],
        }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn at(&self, layer: usize, i: usize, j: usize) -> f64 {
        self.layers[layer][j * self.grid.width + i]
    }

    pub fn max_value(&self) -> f64 {
        self.layers.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Node `(i, j)` holding the largest value of a layer; ties resolve to
    /// the first in row-major order.
    pub fn argmax(&self, layer: usize) -> (usize, usize) {
        let raster = &self.layers[layer];
        let mut best = 0;
        for (k, v) in raster.iter().enumerate() {
            if *v > raster[best] {
                best = k;
            }
        }
        (best % self.grid.width, best / self.grid.width)
    }

    /// Bilinear value and spatial gradient at `(x, y)`, or `None` outside
    /// the grid.
    pub fn sample(&self, layer: usize, x: f64, y: f64) -> Option<(f64, [f64; 2])> {
        let g = &self.grid;
        if !g.contains(x, y) {
            return None;
        }
        let fx = (x - g.origin[0]) / g.resolution;
        let fy = (y - g.origin[1]) / g.resolution;
        let i = (fx.floor() as usize).min(g.width - 2);
        let j = (fy.floor() as usize).min(g.height - 2);
        let u = fx - i as f64;
        let w = fy - j as f64;
        let v00 = self.at(layer, i, j);
        let v10 = self.at(layer, i + 1, j);
        let v01 = self.at(layer, i, j + 1);
        let v11 = self.at(layer, i + 1, j + 1);
        let value = (1.0 - u) * (1.0 - w) * v00 + u * (1.0 - w) * v10 + (1.0 - u) * w * v01 + u * w * v11;
        let dx = ((1.0 - w) * (v10 - v00) + w * (v11 - v01)) / g.resolution;
        let dy = ((1.0 - u) * (v01 - v00) + u * (v11 - v10)) / g.resolution;
        Some((value, [dx, dy]))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for layer in &self.layers {
            if layer.len() != self.grid.cells() {
                return Err(Error::Invalid("risk layer size disagrees with its grid".into()));
            }
            if layer.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Invalid("risk values must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Participant position offsets in the participant's heading frame, drawn
/// from the component's covariance.
fn local_offsets(std: [f64; 2], corr: f64, heading: f64, draws: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let (sin, cos) = heading.sin_cos();
    let (sxx, syy, sxy) = (std[0] * std[0], std[1] * std[1], corr * std[0] * std[1]);
    // R Σ Rᵀ for the pseudo rotation R = [[c, s], [−s, c]].
    let a = cos * cos * sxx + 2.0 * cos * sin * sxy + sin * sin * syy;
    let b = -cos * sin * sxx + (cos * cos - sin * sin) * sxy + cos * sin * syy;
    let d = sin * sin * sxx - 2.0 * cos * sin * sxy + cos * cos * syy;
    let l11 = a.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
    let l22 = (d - l21 * l21).max(0.0).sqrt();
    draws
        .iter()
        .map(|z| [l11 * z[0], l21 * z[0] + l22 * z[1]])
        .collect()
}

/// `count` standard-normal pairs made of mirrored halves `z, −z`, so the
/// sample offsets are symmetric about the mean. An odd count gets one extra
/// unpaired draw.
fn antithetic_draws(seed: u64, count: usize) -> Vec<[f64; 2]> {
    let half = standard_draws(seed, count.div_ceil(2));
    let mut out = Vec::with_capacity(count);
    for z in &half {
        out.push(*z);
        if out.len() < count {
            out.push([-z[0], -z[1]]);
        }
    }
    out
}

struct Source {
    mean: [f64; 2],
    heading: f64,
    speed: f64,
    mass: f64,
    weight: f64,
    offsets: Vec<[f64; 2]>,
}

/// Accumulate one source into a raster. Exposure offsets are taken in a
/// frame translated to the source mean, so the field stays centred on the
/// participant whatever the headings.
fn splat(raster: &mut [f64], src: &Source, ego: &EgoParams, cfg: &RiskMapConfig) {
    let g = &cfg.grid;
    let c = &cfg.coeffs;
    let n = src.offsets.len() as f64;
    let severity_at = |heading: f64| {
        let dv = severity_delta_v(ego.mass, ego.speed, src.mass, src.speed, heading - src.heading);
        (c.severity(dv), c.stretch(dv))
    };
    let fixed = severity_at(ego.heading);
    for j in 0..g.height {
        for i in 0..g.width {
            let p = g.node(i, j);
            let heading = match cfg.heading_policy {
                HeadingPolicy::Current => ego.heading,
                HeadingPolicy::TowardCell => {
                    let (dx, dy) = (p[0] - ego.position[0], p[1] - ego.position[1]);
                    if dx == 0.0 && dy == 0.0 {
                        ego.heading
                    } else {
                        dy.atan2(dx)
                    }
                }
            };
            let (sev, stretch) = match cfg.heading_policy {
                HeadingPolicy::Current => fixed,
                HeadingPolicy::TowardCell => severity_at(heading),
            };
            let [qs, ql] = pseudo_rotate([p[0] - src.mean[0], p[1] - src.mean[1]], heading);
            let total: f64 = src
                .offsets
                .iter()
                .map(|o| c.from_parts(sev, stretch, qs - o[0], ql - o[1]))
                .sum();
            let v = src.weight * total / n;
            let cell = &mut raster[j * g.width + i];
            match cfg.accumulation {
                Accumulation::Sum => *cell += v,
                Accumulation::Max => *cell = cell.max(v),
            }
        }
    }
}

/// Rasterise the expected risk of every participant and mode onto
/// `dist.steps + 1` layers. Layer 0 uses the current detected states; layer
/// `t` uses the step-`t` Gaussians weighted by their mode weights.
pub fn build_risk_map(dist: &TrajectoryDistribution, ego: &EgoParams, cfg: &RiskMapConfig) -> Result<RiskMap> {
    cfg.validate()?;
    if dist.objects() > 0 {
        dist.validate()?;
    }
    if !(ego.mass > 0.0 && ego.speed >= 0.0) {
        return Err(Error::Invalid("ego needs positive mass and non-negative speed".into()));
    }
    let mut map = RiskMap::zeros(cfg.grid, dist.steps + 1, dist.dt);
    map.coeffs = cfg.coeffs;

    for (obj, part) in dist.participants.iter().enumerate() {
        let cur = &part.current;
        let src = Source {
            mean: [cur.s, cur.l],
            heading: cur.heading,
            speed: cur.speed,
            mass: part.mass,
            weight: 1.0,
            offsets: vec![[0.0, 0.0]],
        };
        splat(&mut map.layers[0], &src, ego, cfg);
        for mode in 0..dist.modes {
            let weight = dist.weight(mode, obj);
            if weight == 0.0 {
                continue;
            }
            for (step, e) in dist.mode_path(mode, obj).iter().enumerate() {
                let layer = step + 1;
                let draws = antithetic_draws(
                    seed::derive(cfg.seed, &[layer as u64, obj as u64, mode as u64]),
                    cfg.samples,
                );
                let src = Source {
                    mean: e.mean,
                    heading: e.heading,
                    speed: e.speed,
                    mass: part.mass,
                    weight,
                    offsets: local_offsets(e.std, e.corr, e.heading, &draws),
                };
                splat(&mut map.layers[layer], &src, ego, cfg);
            }
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::{Intention, ModeStep, Participant};
    use crate::scenario::{ObjectClass, ObjectState};

    fn small_grid() -> GridSpec {
        GridSpec::new([-10.0, -10.0], 0.5, 41, 41).unwrap()
    }

    fn ego() -> EgoParams {
        EgoParams {
            position: [0.0, 0.0],
            heading: 0.0,
            speed: 8.0,
            mass: 1500.0,
        }
    }

    fn stationary(x: f64, y: f64, steps: usize) -> TrajectoryDistribution {
        let cur = ObjectState::new(3, ObjectClass::Vehicle, x, y, 0.3, 0.0);
        let mut d = TrajectoryDistribution::empty(1, steps);
        d.participants.push(Participant {
            track_id: 3,
            class: cur.class,
            length: cur.length,
            width: cur.width,
            mass: cur.mass,
            current: cur,
        });
        for _ in 0..steps {
            d.entries.push(ModeStep {
                mean: [x, y],
                std: [0.6, 0.6],
                corr: 0.0,
                heading: 0.3,
                speed: 0.0,
            });
        }
        d.weights.push(1.0);
        d.intentions.push(Intention::KEEP);
        d
    }

    #[test]
    fn default_grid_covers_evaluation_range() {
        let g = GridSpec::default();
        assert_eq!(g.height, 161);
        assert!(g.x_max() <= 70.4 && g.x_max() > 69.9);
        assert!(GridSpec::covering(Extent::EVALUATION, 0.0).is_err());
        assert!(GridSpec::covering(Extent::EVALUATION, -1.0).is_err());
    }

    #[test]
    fn empty_scene_is_zero() {
        let cfg = RiskMapConfig {
            grid: small_grid(),
            ..Default::default()
        };
        let map = build_risk_map(&TrajectoryDistribution::empty(1, 6), &ego(), &cfg).unwrap();
        assert_eq!(map.layer_count(), 7);
        assert!(map.layers.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn stationary_peak_at_position() {
        let cfg = RiskMapConfig {
            grid: small_grid(),
            ..Default::default()
        };
        let d = stationary(3.0, -2.0, 6);
        let map = build_risk_map(&d, &ego(), &cfg).unwrap();
        map.validate().unwrap();
        for t in 0..map.layer_count() {
            let peak = map.layers[t].iter().copied().fold(0.0, f64::max);
            assert_eq!(map.at(t, 26, 16), peak, "layer {t}");
            let (i, j) = map.argmax(t);
            let [x, y] = cfg.grid.node(i, j);
            assert!((x - 3.0).hypot(y + 2.0) <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn bilinear_matches_nodes_and_gradient() {
        let g = small_grid();
        let mut map = RiskMap::zeros(g, 1, 0.5);
        for j in 0..g.height {
            for i in 0..g.width {
                let [x, y] = g.node(i, j);
                map.layers[0][j * g.width + i] = 2.0 * x + 3.0 * y + 50.0;
            }
        }
        let (v, grad) = map.sample(0, 1.3, -2.2).unwrap();
        assert!((v - (2.0 * 1.3 - 3.0 * 2.2 + 50.0)).abs() < 1e-9);
        assert!((grad[0] - 2.0).abs() < 1e-9 && (grad[1] - 3.0).abs() < 1e-9);
        assert!(map.sample(0, 10.0, 10.0).is_some());
        assert!(map.sample(0, 10.01, 0.0).is_none());
    }

    #[test]
    fn deterministic_and_max_accumulation_bounded_by_sum() {
        let mut cfg = RiskMapConfig {
            grid: small_grid(),
            ..Default::default()
        };
        let d = stationary(1.0, 1.0, 3);
        let a = build_risk_map(&d, &ego(), &cfg).unwrap();
        let b = build_risk_map(&d, &ego(), &cfg).unwrap();
        assert_eq!(a, b);
        cfg.accumulation = Accumulation::Max;
        let m = build_risk_map(&d, &ego(), &cfg).unwrap();
        for (x, y) in m.layers.iter().flatten().zip(a.layers.iter().flatten()) {
            assert!(*x <= *y + 1e-12);
        }
    }

    #[test]
    fn local_offsets_reproduce_covariance() {
        let draws = standard_draws(5, 20_000);
        let offs = local_offsets([1.0, 2.0], 0.3, 0.7, &draws);
        let n = offs.len() as f64;
        let var_s = offs.iter().map(|o| o[0] * o[0]).sum::<f64>() / n;
        let (sin, cos) = 0.7f64.sin_cos();
        let expect = cos * cos * 1.0 + 2.0 * cos * sin * 0.6 + sin * sin * 4.0;
        assert!((var_s / expect - 1.0).abs() < 0.05);
    }
}
