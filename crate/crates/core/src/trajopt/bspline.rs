use alloc::vec::Vec;

use nalgebra::{Quaternion, UnitQuaternion};

use crate::se3::{RigidTransform, Vec3};

/// Meters.
pub const DEFAULT_MIN_TRANSLATION: f64 = 0.01;
/// Radians (20°).
pub const DEFAULT_MIN_ROTATION: f64 = 20.0 * core::f64::consts::PI / 180.0;

const GRID_PER_SEGMENT: usize = 64;
const BISECTIONS: usize = 60;

#[derive(Clone, Debug)]
pub struct ResampleResult {
    pub poses: Vec<RigidTransform>,
    /// Spline parameter of each emitted pose; input pose `k` sits at `k`.
    pub parameters: Vec<f64>,
    /// Set when there were too few poses for a cubic fit and the input was
    /// passed through unchanged.
    pub passthrough: bool,
}

/// Interpolating cubic spline through positions, piecewise slerp through
/// orientations, then a greedy walk that emits a pose as soon as it is at
/// least `min_translation` or `min_rotation` away from the previous one.
pub fn bspline_resample(poses: &[RigidTransform], min_translation: f64, min_rotation: f64) -> ResampleResult {
    if poses.len() < 4 {
        return ResampleResult {
            poses: poses.to_vec(),
            parameters: (0..poses.len()).map(|k| k as f64).collect(),
            passthrough: true,
        };
    }
    let curve = PoseCurve::new(poses);
    let far_enough = |a: &RigidTransform, b: &RigidTransform| {
        a.translation_distance(b) >= min_translation || a.rotation_angle_to(b) >= min_rotation
    };

    let end = (poses.len() - 1) as f64;
    let step = 1.0 / GRID_PER_SEGMENT as f64;
    let mut params = alloc::vec![0.0];
    let mut emitted = alloc::vec![curve.eval(0.0)];
    let mut s = 0.0;
    'walk: loop {
        let anchor = *emitted.last().unwrap();
        let mut lo = s;
        loop {
            let hi = (lo + step).min(end);
            if hi <= lo {
                break 'walk;
            }
            if far_enough(&anchor, &curve.eval(hi)) {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..BISECTIONS {
                    let mid = 0.5 * (a + b);
                    if far_enough(&anchor, &curve.eval(mid)) {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                if b >= end {
                    break 'walk;
                }
                s = b;
                params.push(b);
                emitted.push(curve.eval(b));
                break;
            }
            lo = hi;
        }
    }

    let last = curve.eval(end);
    // Interior samples too close to the endpoint are dropped.
    while emitted.len() > 1 && !far_enough(emitted.last().unwrap(), &last) {
        emitted.pop();
        params.pop();
    }
    params.push(end);
    emitted.push(last);
    ResampleResult {
        poses: emitted,
        parameters: params,
        passthrough: false,
    }
}

struct PoseCurve {
    positions: Vec<Vec3>,
    /// Second derivatives at the knots (natural end conditions).
    second: Vec<Vec3>,
    rotations: Vec<UnitQuaternion<f64>>,
}

impl PoseCurve {
    fn new(poses: &[RigidTransform]) -> Self {
        let positions: Vec<Vec3> = poses.iter().map(|p| *p.translation()).collect();
        let mut rotations: Vec<UnitQuaternion<f64>> = Vec::with_capacity(poses.len());
        for p in poses {
            let mut q = p.unit_quaternion();
            if let Some(prev) = rotations.last() {
                if prev.coords.dot(&q.coords) < 0.0 {
                    q = UnitQuaternion::new_unchecked(-q.into_inner());
                }
            }
            rotations.push(q);
        }
        let second = natural_second_derivatives(&positions);
        Self {
            positions,
            second,
            rotations,
        }
    }

    fn eval(&self, s: f64) -> RigidTransform {
        let n = self.positions.len();
        let i = (s.floor() as usize).min(n - 2);
        let u = s - i as f64;
        let v = 1.0 - u;
        let p = self.positions[i] * v
            + self.positions[i + 1] * u
            + self.second[i] * ((v * v * v - v) / 6.0)
            + self.second[i + 1] * ((u * u * u - u) / 6.0);
        let q = slerp(&self.rotations[i], &self.rotations[i + 1], u);
        RigidTransform::from_parts_unchecked(q.to_rotation_matrix().into_inner(), p)
    }
}

fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    // Nearly identical orientations fall back to normalized lerp.
    a.try_slerp(b, t, 1e-12).unwrap_or_else(|| {
        UnitQuaternion::new_normalize(Quaternion::from(a.coords * (1.0 - t) + b.coords * t))
    })
}

/// Thomas algorithm for `M_{i−1} + 4M_i + M_{i+1} = 6Δ²y_i` with `M_0 = M_{n−1} = 0`.
fn natural_second_derivatives(y: &[Vec3]) -> Vec<Vec3> {
    let n = y.len();
    let mut m = alloc::vec![Vec3::zeros(); n];
    if n < 3 {
        return m;
    }
    let k = n - 2;
    let mut c = alloc::vec![0.0; k];
    let mut d = alloc::vec![Vec3::zeros(); k];
    for j in 0..k {
        let rhs = (y[j + 2] - y[j + 1] * 2.0 + y[j]) * 6.0;
        if j == 0 {
            c[j] = 1.0 / 4.0;
            d[j] = rhs / 4.0;
        } else {
            let denom = 4.0 - c[j - 1];
            c[j] = 1.0 / denom;
            d[j] = (rhs - d[j - 1]) / denom;
        }
    }
    m[k] = d[k - 1];
    for j in (0..k - 1).rev() {
        m[j + 1] = d[j] - m[j + 2] * c[j];
    }
    m
}
