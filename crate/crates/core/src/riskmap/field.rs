//! Pairwise severity/exposure risk field and its Gaussian expectation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scenario::{pseudo_rotate, ObjectState};
use crate::{seed, Error, Result};

/// Coefficients of the risk field. All must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCoeffs {
    /// Severity gain (s²/m²).
    pub c0: f64,
    /// Severity floor.
    pub c1: f64,
    /// Longitudinal exposure weight.
    pub c2: f64,
    /// Longitudinal stretch per unit Δv (s/m).
    pub c3: f64,
    /// Lateral exposure weight.
    pub c4: f64,
    /// Floor on the exposure denominator (m).
    pub epsilon: f64,
}

impl Default for RiskCoeffs {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 0.2,
            c4: 1.0,
            epsilon: 0.5,
        }
    }
}

impl RiskCoeffs {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c0, self.c1, self.c2, self.c3, self.c4, self.epsilon];
        if all.iter().all(|c| *c > 0.0 && c.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("risk coefficients and epsilon must be positive".into()))
        }
    }

    /// Severity numerator `c0·Δv² + c1`.
    pub fn severity(&self, delta_v: f64) -> f64 {
        self.c0 * delta_v * delta_v + self.c1
    }

    /// Factor applied to Δs inside the exposure term, `e^{−c3·Δv}`.
    pub fn stretch(&self, delta_v: f64) -> f64 {
        (-self.c3 * delta_v).exp()
    }

    /// Risk from precomputed severity, stretch and pseudo offsets.
    #[inline]
    pub fn from_parts(&self, severity: f64, stretch: f64, ds: f64, dl: f64) -> f64 {
        let a = ds * stretch;
        let denom = (self.c2 * a * a + self.c4 * dl * dl).sqrt();
        severity / denom.max(self.epsilon)
    }
}

/// A hypothetical ego state at a query position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoHypothesis {
    pub s: f64,
    pub l: f64,
    pub heading: f64,
    pub speed: f64,
    pub mass: f64,
}

/// Mass-weighted relative speed of the two velocity vectors:
/// `m_A/(m_A+m_B) · sqrt(v_A² + v_B² − 2 v_A v_B cos α)`.
pub fn severity_delta_v(mass_a: f64, speed_a: f64, mass_b: f64, speed_b: f64, alpha: f64) -> f64 {
    let radicand = speed_a * speed_a + speed_b * speed_b - 2.0 * speed_a * speed_b * alpha.cos();
    mass_a / (mass_a + mass_b) * radicand.max(0.0).sqrt()
}

/// Difference of the two heading-rotated pseudo positions: each position is
/// rotated by its own object's heading before subtracting.
///
/// The pseudo rotation is about the coordinate origin, so the result
/// depends on where that origin sits whenever the headings differ.
pub fn exposure_offsets(ego: &EgoHypothesis, other: &ObjectState) -> (f64, f64) {
    let [se, le] = pseudo_rotate([ego.s, ego.l], ego.heading);
    let [so, lo] = pseudo_rotate([other.s, other.l], other.heading);
    (se - so, le - lo)
}

fn delta_v(ego: &EgoHypothesis, other_mass: f64, other_speed: f64, other_heading: f64) -> f64 {
    severity_delta_v(ego.mass, ego.speed, other_mass, other_speed, ego.heading - other_heading)
}

/// Risk of the ego hypothesis interacting with `other`.
pub fn risk_value(ego: &EgoHypothesis, other: &ObjectState, coeffs: &RiskCoeffs) -> f64 {
    let dv = delta_v(ego, other.mass, other.speed, other.heading);
    let (ds, dl) = exposure_offsets(ego, other);
    coeffs.from_parts(coeffs.severity(dv), coeffs.stretch(dv), ds, dl)
}

/// One bivariate Gaussian over a participant's position, together with the
/// kinematics it is predicted to have there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: [f64; 2],
    pub std: [f64; 2],
    pub corr: f64,
    pub heading: f64,
    pub speed: f64,
    pub mass: f64,
}

impl GaussianComponent {
    pub fn validate(&self) -> Result<()> {
        if !(self.std[0] > 0.0 && self.std[1] > 0.0 && self.corr.abs() < 1.0) {
            return Err(Error::Invalid("Gaussian needs positive spread and |corr| < 1".into()));
        }
        Ok(())
    }

    /// Position offset from the mean for a standard-normal pair.
    #[inline]
    pub fn offset(&self, z: [f64; 2]) -> [f64; 2] {
        let rho = self.corr;
        [
            self.std[0] * z[0],
            self.std[1] * (rho * z[0] + (1.0 - rho * rho).sqrt() * z[1]),
        ]
    }
}

/// `count` standard-normal pairs from the stream keyed by `seed`.
pub fn standard_draws(seed: u64, count: usize) -> Vec<[f64; 2]> {
    let mut rng = seed::rng(seed, &[]);
    (0..count)
        .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect()
}

/// Monte-Carlo mean of [`risk_value`] over participant positions drawn from
/// the component, using the supplied standard-normal pairs.
pub fn hierarchical_risk_with(
    ego: &EgoHypothesis,
    comp: &GaussianComponent,
    coeffs: &RiskCoeffs,
    draws: &[[f64; 2]],
) -> f64 {
    let dv = delta_v(ego, comp.mass, comp.speed, comp.heading);
    let sev = coeffs.severity(dv);
    let stretch = coeffs.stretch(dv);
    let [se, le] = pseudo_rotate([ego.s, ego.l], ego.heading);
    let total: f64 = draws
        .iter()
        .map(|&z| {
            let d = comp.offset(z);
            let [so, lo] = pseudo_rotate([comp.mean[0] + d[0], comp.mean[1] + d[1]], comp.heading);
            coeffs.from_parts(sev, stretch, se - so, le - lo)
        })
        .sum();
    total / draws.len() as f64
}

/// Expected risk over the participant-position Gaussian, estimated from
/// `samples` seeded draws.
pub fn hierarchical_risk(
    ego: &EgoHypothesis,
    comp: &GaussianComponent,
    coeffs: &RiskCoeffs,
    samples: usize,
    seed: u64,
) -> f64 {
    hierarchical_risk_with(ego, comp, coeffs, &standard_draws(seed, samples.max(1)))
}

/// Estimate and standard error of [`hierarchical_risk`].
pub fn hierarchical_risk_stats(
    ego: &EgoHypothesis,
    comp: &GaussianComponent,
    coeffs: &RiskCoeffs,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let draws = standard_draws(seed, samples.max(2));
    let values: Vec<f64> = draws
        .iter()
        .map(|z| hierarchical_risk_with(ego, comp, coeffs, std::slice::from_ref(z)))
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ObjectClass;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ego(s: f64, l: f64, heading: f64, speed: f64) -> EgoHypothesis {
        EgoHypothesis {
            s,
            l,
            heading,
            speed,
            mass: 1500.0,
        }
    }

    fn other(s: f64, l: f64, heading: f64, speed: f64) -> ObjectState {
        ObjectState::new(1, ObjectClass::Vehicle, s, l, heading, speed)
    }

    #[test]
    fn delta_v_examples() {
        assert!(severity_delta_v(1500.0, 10.0, 1500.0, 10.0, 0.0).abs() < 1e-12);
        assert!((severity_delta_v(1500.0, 10.0, 1500.0, 10.0, PI) - 10.0).abs() < 1e-12);
        // ½·√200
        assert!((severity_delta_v(1500.0, 10.0, 1500.0, 10.0, FRAC_PI_2) - 7.0710678).abs() < 1e-7);
    }

    #[test]
    fn exposure_examples() {
        let (ds, dl) = exposure_offsets(&ego(5.0, 2.0, 0.0, 0.0), &other(1.0, -1.0, 0.0, 0.0));
        assert_eq!((ds, dl), (4.0, 3.0));
        let (ds, dl) = exposure_offsets(&ego(0.0, 0.0, 0.0, 0.0), &other(0.0, 0.0, FRAC_PI_2, 0.0));
        assert_eq!((ds, dl), (0.0, 0.0));
        let (ds, dl) = exposure_offsets(&ego(4.0, 2.0, FRAC_PI_2, 0.0), &other(1.0, 1.0, 0.0, 0.0));
        assert!((ds - 1.0).abs() < 1e-12);
        assert!((dl + 5.0).abs() < 1e-12);
    }

    #[test]
    fn risk_value_examples() {
        let c = RiskCoeffs::default();
        // Co-located: floor active, (c0·Δv² + c1)/ε.
        let e = ego(0.0, 0.0, 0.0, 10.0);
        let o = other(0.0, 0.0, PI, 10.0);
        assert!((risk_value(&e, &o, &c) - (100.0 + 1.0) / 0.5).abs() < 1e-9);

        // Head-on at 5 m/s each gives Δv = 5; Δs = 10, Δl = 0.
        // V = 26 / (10·e^{-1}) with e^{-1} = 0.367879.
        let e = ego(10.0, 0.0, 0.0, 5.0);
        let o = other(0.0, 0.0, PI, 5.0);
        let v = risk_value(&e, &o, &c);
        assert!((v - 26.0 / (10.0 * 0.367879)).abs() < 1e-4);
        assert!((v - 7.06754).abs() < 1e-4);

        // Co-moving at equal speed: Δv = 0, so V = c1 / 10.
        let o = other(0.0, 0.0, 0.0, 5.0);
        assert!((risk_value(&e, &o, &c) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn risk_is_homogeneous_of_degree_minus_one() {
        let c = RiskCoeffs::default();
        let sev = c.severity(3.0);
        let st = c.stretch(3.0);
        let v1 = c.from_parts(sev, st, 4.0, 3.0);
        let v2 = c.from_parts(sev, st, 8.0, 6.0);
        assert!((v1 - 2.0 * v2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_gaussian_matches_point_risk() {
        let c = RiskCoeffs::default();
        let e = ego(3.0, 1.0, 0.2, 9.0);
        let comp = GaussianComponent {
            mean: [12.0, -2.0],
            std: [1e-9, 1e-9],
            corr: 0.0,
            heading: 1.1,
            speed: 6.0,
            mass: 1500.0,
        };
        let point = risk_value(&e, &other(12.0, -2.0, 1.1, 6.0), &c);
        let h = hierarchical_risk(&e, &comp, &c, 64, 5);
        assert!(((h - point) / point).abs() < 1e-6);
    }

    #[test]
    fn farther_means_carry_less_risk() {
        let c = RiskCoeffs::default();
        let e = ego(0.0, 0.0, 0.0, 10.0);
        let near = GaussianComponent {
            mean: [10.0, 0.0],
            std: [1.0, 1.0],
            corr: 0.0,
            heading: 0.0,
            speed: 5.0,
            mass: 1500.0,
        };
        let far = GaussianComponent {
            mean: [30.0, 0.0],
            ..near
        };
        for seed in 0..10 {
            assert!(hierarchical_risk(&e, &far, &c, 64, seed) < hierarchical_risk(&e, &near, &c, 64, seed));
        }
    }
}
