//! Planar rigid transforms and oriented-box geometry.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Rotates `(s, l)` into the heading-aligned pseudo frame:
/// `[cos φ·s + sin φ·l, −sin φ·s + cos φ·l]`.
pub fn pseudo_rotate(position: [f64; 2], heading: f64) -> [f64; 2] {
    let (sin, cos) = heading.sin_cos();
    let [s, l] = position;
    [cos * s + sin * l, -sin * s + cos * l]
}

/// A planar pose: position plus heading (rad, world frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    /// Expresses a world pose in this pose's local frame.
    pub fn to_local(&self, p: Pose2) -> Pose2 {
        let [x, y] = pseudo_rotate([p.x - self.x, p.y - self.y], self.heading);
        Pose2::new(x, y, wrap_angle(p.heading - self.heading))
    }

    /// Inverse of [`Pose2::to_local`].
    pub fn to_world(&self, p: Pose2) -> Pose2 {
        let [dx, dy] = pseudo_rotate([p.x, p.y], -self.heading);
        Pose2::new(self.x + dx, self.y + dy, wrap_angle(p.heading + self.heading))
    }
}

/// Oriented bounding box footprint in the bird's-eye plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Obb {
    pub fn new(x: f64, y: f64, heading: f64, length: f64, width: f64) -> Self {
        Self {
            x,
            y,
            heading,
            length,
            width,
        }
    }

    /// Axis-aligned box spanning the given bounds.
    pub fn from_bounds(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self::new(
            0.5 * (x_min + x_max),
            0.5 * (y_min + y_max),
            0.0,
            x_max - x_min,
            y_max - y_min,
        )
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            length: self.length + 2.0 * margin,
            width: self.width + 2.0 * margin,
            ..*self
        }
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (sin, cos) = self.heading.sin_cos();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let ax = [cos * hl, sin * hl];
        let ay = [-sin * hw, cos * hw];
        [
            [self.x + ax[0] + ay[0], self.y + ax[1] + ay[1]],
            [self.x - ax[0] + ay[0], self.y - ax[1] + ay[1]],
            [self.x - ax[0] - ay[0], self.y - ax[1] - ay[1]],
            [self.x + ax[0] - ay[0], self.y + ax[1] - ay[1]],
        ]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let [u, v] = pseudo_rotate([p[0] - self.x, p[1] - self.y], self.heading);
        u.abs() <= 0.5 * self.length && v.abs() <= 0.5 * self.width
    }

    /// Whether the segment `a → b` passes through the box.
    pub fn intersects_segment(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        // Slab test in the box frame.
        let pa = pseudo_rotate([a[0] - self.x, a[1] - self.y], self.heading);
        let pb = pseudo_rotate([b[0] - self.x, b[1] - self.y], self.heading);
        let half = [0.5 * self.length, 0.5 * self.width];
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for axis in 0..2 {
            let d = pb[axis] - pa[axis];
            if d.abs() < 1e-12 {
                if pa[axis].abs() > half[axis] {
                    return false;
                }
                continue;
            }
            let mut ta = (-half[axis] - pa[axis]) / d;
            let mut tb = (half[axis] - pa[axis]) / d;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// Separating-axis test; touching boxes do not overlap.
pub fn obb_overlap(a: &Obb, b: &Obb) -> bool {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let reach = 0.5 * (a.length.hypot(a.width) + b.length.hypot(b.width));
    if dx * dx + dy * dy >= reach * reach {
        return false;
    }
    let ca = a.corners();
    let cb = b.corners();
    for heading in [a.heading, b.heading] {
        let (sin, cos) = heading.sin_cos();
        for axis in [[cos, sin], [-sin, cos]] {
            let project = |pts: &[[f64; 2]; 4]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let d = p[0] * axis[0] + p[1] * axis[1];
                    (lo.min(d), hi.max(d))
                })
            };
            let (alo, ahi) = project(&ca);
            let (blo, bhi) = project(&cb);
            if ahi <= blo + 1e-12 || bhi <= alo + 1e-12 {
                return false;
            }
        }
    }
    true
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    0.5 * twice.abs()
}

/// Sutherland–Hodgman clip of `subject` against a convex CCW `clip` polygon.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let sc = side(cur);
            let sp = side(prev);
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(intersect(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    output
}

fn intersect(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Area of the intersection of two oriented footprints.
pub fn obb_intersection_area(a: &Obb, b: &Obb) -> f64 {
    if !obb_overlap(a, b) {
        return 0.0;
    }
    polygon_area(&clip_convex(&a.corners(), &b.corners()))
}

/// Bird's-eye intersection-over-union of two oriented footprints.
pub fn obb_iou(a: &Obb, b: &Obb) -> f64 {
    let inter = obb_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: [f64; 2], b: [f64; 2]) -> bool {
        (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
    }

    #[test]
    fn pseudo_rotate_examples() {
        assert!(close(pseudo_rotate([2.0, 3.0], 0.0), [2.0, 3.0]));
        assert!(close(pseudo_rotate([1.0, 0.0], FRAC_PI_2), [0.0, -1.0]));
        assert!(close(pseudo_rotate([2.0, 3.0], PI), [-2.0, -3.0]));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn local_frame_examples() {
        let ego = Pose2::new(5.0, 0.0, 0.0);
        let local = ego.to_local(Pose2::new(5.0, 0.0, 0.0));
        assert_eq!(local, Pose2::new(0.0, 0.0, 0.0));

        let ego = Pose2::new(0.0, 0.0, FRAC_PI_2);
        let local = ego.to_local(Pose2::new(1.0, 0.0, 0.0));
        assert!(local.x.abs() < 1e-12);
        assert!((local.y + 1.0).abs() < 1e-12);
        assert!((local.heading + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let a = Obb::new(0.0, 0.0, 0.0, 4.0, 2.0);
        assert!((obb_iou(&a, &a) - 1.0).abs() < 1e-12);
        let far = Obb::new(100.0, 0.0, 0.0, 4.0, 2.0);
        assert_eq!(obb_iou(&a, &far), 0.0);
        // Overlap 2×2 = 4, union 8 + 8 − 4 = 12.
        let shifted = Obb::new(2.0, 0.0, 0.0, 4.0, 2.0);
        assert!((obb_iou(&a, &shifted) - 4.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_iou_matches_analytic_cross() {
        // A 4×2 box and the same box turned 90°: cross of area 2×2 = 4.
        let a = Obb::new(0.0, 0.0, 0.0, 4.0, 2.0);
        let b = Obb::new(0.0, 0.0, FRAC_PI_2, 4.0, 2.0);
        assert!((obb_iou(&a, &b) - 4.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn segment_test() {
        let b = Obb::from_bounds(0.0, 2.0, 0.0, 2.0);
        assert!(b.intersects_segment([-1.0, 1.0], [3.0, 1.0]));
        assert!(!b.intersects_segment([-1.0, 3.0], [3.0, 3.0]));
        assert!(!b.intersects_segment([-3.0, 1.0], [-1.0, 1.0]));
    }

    proptest! {
        #[test]
        fn pseudo_rotate_preserves_norm(s in -100.0..100.0f64, l in -100.0..100.0f64, h in -10.0..10.0f64) {
            let r = pseudo_rotate([s, l], h);
            let n0 = s.hypot(l);
            let n1 = r[0].hypot(r[1]);
            prop_assert!((n0 - n1).abs() <= 1e-12 * n0.max(1.0));
        }

        #[test]
        fn frame_round_trip(
            fx in -100.0..100.0f64, fy in -100.0..100.0f64, fh in -PI..PI,
            px in -100.0..100.0f64, py in -100.0..100.0f64, ph in -PI..PI,
        ) {
            let frame = Pose2::new(fx, fy, fh);
            let p = Pose2::new(px, py, ph);
            let back = frame.to_world(frame.to_local(p));
            prop_assert!((back.x - p.x).abs() < 1e-9);
            prop_assert!((back.y - p.y).abs() < 1e-9);
            prop_assert!(wrap_angle(back.heading - p.heading).abs() < 1e-12);
        }

        #[test]
        fn iou_symmetric_and_bounded(
            x in -5.0..5.0f64, y in -5.0..5.0f64, h1 in -PI..PI, h2 in -PI..PI,
            l1 in 0.5..6.0f64, w1 in 0.5..3.0f64, l2 in 0.5..6.0f64, w2 in 0.5..3.0f64,
        ) {
            let a = Obb::new(0.0, 0.0, h1, l1, w1);
            let b = Obb::new(x, y, h2, l2, w2);
            let ab = obb_iou(&a, &b);
            let ba = obb_iou(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((obb_iou(&a, &a) - 1.0).abs() < 1e-9);
            prop_assert_eq!(ab > 0.0, obb_overlap(&a, &b) && obb_intersection_area(&a, &b) > 0.0);
        }
    }
}
