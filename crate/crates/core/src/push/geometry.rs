use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Rotation2, Vector2};
use num_traits::Float;

use crate::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Planar rigid pose: body-to-world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    /// Radians, kept in `(−π, π]`.
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Rotation2<f64> {
        Rotation2::new(self.theta)
    }

    pub fn to_world(&self, body: &Vec2) -> Vec2 {
        self.rotation() * body + self.position()
    }

    pub fn to_body(&self, world: &Vec2) -> Vec2 {
        self.rotation().inverse() * (world - self.position())
    }

    pub fn vector_to_world(&self, v: &Vec2) -> Vec2 {
        self.rotation() * v
    }

    pub fn vector_to_body(&self, v: &Vec2) -> Vec2 {
        self.rotation().inverse() * v
    }

    /// Applies a body-frame twist `(v_x, v_y, ω)` for unit time using the
    /// planar exponential map.
    pub fn integrate_body_twist(&self, vx: f64, vy: f64, omega: f64) -> Pose2 {
        let (dx, dy) = if Float::abs(omega) < 1e-12 {
            (vx, vy)
        } else {
            let (s, c) = Float::sin_cos(omega);
            ((vx * s - vy * (1.0 - c)) / omega, (vx * (1.0 - c) + vy * s) / omega)
        };
        let d = self.vector_to_world(&Vec2::new(dx, dy));
        Pose2::new(self.x + d.x, self.y + d.y, self.theta + omega)
    }

    pub fn translated(&self, d: &Vec2) -> Pose2 {
        Pose2 {
            x: self.x + d.x,
            y: self.y + d.y,
            theta: self.theta,
        }
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.position() - other.position()).norm()
    }

    /// Absolute wrapped heading difference.
    pub fn angle_to(&self, other: &Pose2) -> f64 {
        Float::abs(wrap_angle(other.theta - self.theta))
    }
}

/// A T made of a vertical stem under a horizontal crossbar, in a body frame
/// centered at the area centroid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TBlockShape {
    pub stem_width: f64,
    pub stem_length: f64,
    pub bar_length: f64,
    pub bar_width: f64,
}

impl Default for TBlockShape {
    fn default() -> Self {
        Self {
            stem_width: 0.03,
            stem_length: 0.09,
            bar_length: 0.09,
            bar_width: 0.03,
        }
    }
}

/// Closest point on a polygon boundary.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub point: Vec2,
    pub edge: usize,
    pub distance: f64,
}

impl TBlockShape {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.stem_width, self.stem_length, self.bar_length, self.bar_width];
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) && self.bar_length > self.stem_width {
            Ok(())
        } else {
            Err(Error::InvalidInput("T-block dimensions must be positive and the bar wider than the stem".into()))
        }
    }

    pub fn area(&self) -> f64 {
        self.stem_width * self.stem_length + self.bar_length * self.bar_width
    }

    /// Height of the stem/bar junction above the centroid.
    fn junction(&self) -> f64 {
        // Unshifted frame: stem occupies y ∈ [0, L_s], bar y ∈ [L_s, L_s + W_b].
        let a_s = self.stem_width * self.stem_length;
        let a_b = self.bar_length * self.bar_width;
        let cy = (a_s * 0.5 * self.stem_length + a_b * (self.stem_length + 0.5 * self.bar_width)) / (a_s + a_b);
        self.stem_length - cy
    }

    /// Counter-clockwise outline, eight vertices.
    pub fn vertices(&self) -> [Vec2; 8] {
        let j = self.junction();
        let (hs, hb) = (0.5 * self.stem_width, 0.5 * self.bar_length);
        let bottom = j - self.stem_length;
        let top = j + self.bar_width;
        [
            Vec2::new(-hs, bottom),
            Vec2::new(hs, bottom),
            Vec2::new(hs, j),
            Vec2::new(hb, j),
            Vec2::new(hb, top),
            Vec2::new(-hb, top),
            Vec2::new(-hb, j),
            Vec2::new(-hs, j),
        ]
    }

    pub fn edge(&self, k: usize) -> (Vec2, Vec2) {
        let v = self.vertices();
        (v[k], v[(k + 1) % 8])
    }

    /// Outward unit normal of edge `k`.
    pub fn outward_normal(&self, k: usize) -> Vec2 {
        let (a, b) = self.edge(k);
        let d = (b - a).normalize();
        Vec2::new(d.y, -d.x)
    }

    pub fn perimeter(&self) -> f64 {
        (0..8).map(|k| {
            let (a, b) = self.edge(k);
            (b - a).norm()
        })
        .sum()
    }

    /// Point-in-polygon for the union of the two rectangles; the boundary
    /// counts as outside.
    pub fn contains_strict(&self, p: &Vec2) -> bool {
        let j = self.junction();
        let (hs, hb) = (0.5 * self.stem_width, 0.5 * self.bar_length);
        let in_stem = Float::abs(p.x) < hs && p.y > j - self.stem_length && p.y < j;
        let in_bar = Float::abs(p.x) < hb && p.y > j && p.y < j + self.bar_width;
        // The segment where stem and bar meet is interior too.
        let seam = p.y == j && Float::abs(p.x) < hs;
        in_stem || in_bar || seam
    }

    pub fn closest_boundary_point(&self, p: &Vec2) -> BoundaryPoint {
        let mut best = BoundaryPoint {
            point: Vec2::zeros(),
            edge: 0,
            distance: f64::INFINITY,
        };
        for k in 0..8 {
            let (a, b) = self.edge(k);
            let ab = b - a;
            let s = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let q = a + ab * s;
            let dist = (p - q).norm();
            if dist < best.distance {
                best = BoundaryPoint {
                    point: q,
                    edge: k,
                    distance: dist,
                };
            }
        }
        best
    }

    /// First crossing of the segment `p → p + delta` into the block, as
    /// `(fraction along the segment, edge index)`.
    pub fn first_entry(&self, p: &Vec2, delta: &Vec2) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for k in 0..8 {
            let n = self.outward_normal(k);
            if delta.dot(&n) >= 0.0 {
                continue;
            }
            let (a, b) = self.edge(k);
            let e = b - a;
            let denom = cross(delta, &e);
            if denom == 0.0 {
                continue;
            }
            let ap = a - p;
            let s = cross(&ap, &e) / denom;
            let u = cross(&ap, delta) / denom;
            if (0.0..=1.0).contains(&s) && (-1e-12..=1.0 + 1e-12).contains(&u) && best.is_none_or(|(bs, _)| s < bs) {
                best = Some((s, k));
            }
        }
        best
    }

    /// Grid of body-frame points inside the block with the given spacing,
    /// aligned to the centroid.
    pub fn grid_particles(&self, spacing: f64) -> Vec<Vec2> {
        let v = self.vertices();
        let (min_x, max_x) = (v[5].x, v[4].x);
        let (min_y, max_y) = (v[0].y, v[4].y);
        let mut out = Vec::new();
        let kx = Float::ceil((max_x - min_x) / spacing) as i64;
        let ky = Float::ceil((max_y - min_y) / spacing) as i64;
        for iy in -ky..=ky {
            for ix in -kx..=kx {
                let p = Vec2::new(ix as f64 * spacing, iy as f64 * spacing);
                if p.x > min_x && p.x < max_x && p.y > min_y && p.y < max_y && self.contains_strict(&p) {
                    out.push(p);
                }
            }
        }
        out
    }
}

pub(crate) fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}
