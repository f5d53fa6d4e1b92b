use alloc::vec::Vec;

use nalgebra::Matrix2;
use num_traits::Float;

use super::geometry::{Pose2, TBlockShape, Vec2};
use crate::{Error, Result};

/// Default limit-surface characteristic length, meters.
pub const DEFAULT_LIMIT_SURFACE_C: f64 = 0.05;
/// Default pusher/block Coulomb friction coefficient.
pub const DEFAULT_PUSHER_FRICTION: f64 = 0.3;
/// Largest allowed integration step, meters.
pub const MAX_STEP: f64 = 0.005;

/// Straight-line point push on the table plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushParams {
    pub start: Vec2,
    /// Unit vector.
    pub direction: Vec2,
    /// Meters.
    pub distance: f64,
}

impl PushParams {
    pub fn new(start: Vec2, direction: Vec2, distance: f64) -> Result<Self> {
        let p = Self {
            start,
            direction,
            distance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.iter().all(|v| v.is_finite()) && self.direction.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("push start and direction must be finite".into()));
        }
        if Float::abs(self.direction.norm() - 1.0) > 1e-9 {
            return Err(Error::InvalidInput("push direction must be a unit vector".into()));
        }
        if !(self.distance.is_finite() && self.distance >= 0.0) {
            return Err(Error::InvalidInput("push distance must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn end(&self) -> Vec2 {
        self.start + self.direction * self.distance
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TBlockState {
    pub pose: Pose2,
    pub shape: TBlockShape,
    /// Limit-surface ratio `c`, meters.
    pub friction_param: f64,
    /// Pusher contact friction coefficient.
    pub pusher_friction: f64,
}

impl TBlockState {
    pub fn new(pose: Pose2) -> Self {
        Self {
            pose,
            shape: TBlockShape::default(),
            friction_param: DEFAULT_LIMIT_SURFACE_C,
            pusher_friction: DEFAULT_PUSHER_FRICTION,
        }
    }

    pub fn with_pose(&self, pose: Pose2) -> Self {
        Self { pose, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if !(self.friction_param.is_finite() && self.friction_param > 0.0) {
            return Err(Error::InvalidInput("limit-surface ratio must be positive".into()));
        }
        if !(self.pusher_friction.is_finite() && self.pusher_friction >= 0.0) {
            return Err(Error::InvalidInput("pusher friction must be non-negative".into()));
        }
        if ![self.pose.x, self.pose.y, self.pose.theta].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("block pose must be finite".into()));
        }
        Ok(())
    }

    /// Whether the push path enters the block before its end.
    pub fn push_contacts(&self, push: &PushParams) -> bool {
        let p = self.pose.to_body(&push.start);
        let d = self.pose.vector_to_body(&(push.direction * push.distance));
        self.shape.contains_strict(&p) || self.shape.first_entry(&p, &d).is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushOutcome {
    pub state: TBlockState,
    /// True when the pusher touched the block at some point.
    pub contact: bool,
}

/// Body-frame twist per unit pusher travel for a point contact at `r` with
/// inward normal `n`, pusher velocity `v`, under an ellipsoidal limit
/// surface. Returns `None` when the pusher moves away from the surface.
fn contact_twist(r: &Vec2, n: &Vec2, v: &Vec2, c: f64, mu: f64) -> Option<(f64, f64, f64)> {
    let vn = v.dot(n);
    if vn <= 0.0 {
        return None;
    }
    let c2 = c * c;
    let m = Matrix2::new(
        1.0 + r.y * r.y / c2,
        -r.x * r.y / c2,
        -r.x * r.y / c2,
        1.0 + r.x * r.x / c2,
    );
    let twist_of = |f: &Vec2| {
        let torque = r.x * f.y - r.y * f.x;
        (f.x, f.y, torque / c2)
    };
    let tangent = Vec2::new(-n.y, n.x);
    let f_left = n + tangent * mu;
    let f_right = n - tangent * mu;
    let (v_left, v_right) = (m * f_left, m * f_right);
    let cross = super::geometry::cross;
    // Inside the motion cone: the contact sticks.
    let inside = cross(&v_right, v) >= 0.0 && cross(v, &v_left) >= 0.0;
    if inside {
        let f = m.try_inverse()? * v;
        return Some(twist_of(&f));
    }
    let (f_edge, v_edge) = if cross(&v_right, v) < 0.0 {
        (f_right, v_right)
    } else {
        (f_left, v_left)
    };
    // Sliding: scale the edge force so the normal velocities agree.
    let k = vn / v_edge.dot(n);
    let (a, b, w) = twist_of(&f_edge);
    Some((a * k, b * k, w * k))
}

/// Contact frame at a body-frame pusher location: closest boundary point and
/// the inward normal of the edge facing the pusher.
fn contact_frame(shape: &TBlockShape, p: &Vec2, v: &Vec2) -> (Vec2, Vec2) {
    let bp = shape.closest_boundary_point(p);
    let mut edge = bp.edge;
    // At a vertex both adjacent edges are equally close; take the one the
    // pusher is driving into.
    for k in [(bp.edge + 7) % 8, (bp.edge + 1) % 8] {
        let (a, b) = shape.edge(k);
        let ab = b - a;
        let s = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let d = (p - (a + ab * s)).norm();
        if d <= bp.distance + 1e-12 && v.dot(&shape.outward_normal(k)) < v.dot(&shape.outward_normal(edge)) {
            edge = k;
        }
    }
    (bp.point, -shape.outward_normal(edge))
}

/// Moves the block so the pusher point no longer lies inside it.
fn resolve_penetration(state: &mut TBlockState, pusher: &Vec2) {
    for _ in 0..4 {
        let p = state.pose.to_body(pusher);
        if !state.shape.contains_strict(&p) {
            return;
        }
        let q = state.shape.closest_boundary_point(&p).point;
        let shift = pusher - state.pose.to_world(&q);
        state.pose = state.pose.translated(&shift);
    }
}

const CONTACT_SLACK: f64 = 1e-7;
/// Midpoint-rule substeps per pusher increment.
const SUBSTEPS: f64 = 4.0;

/// Quasi-static push of the block by a point pusher moving along the push
/// line in increments of `step` meters.
pub fn simulate_push(state: &TBlockState, push: &PushParams, step: f64) -> Result<PushOutcome> {
    push.validate()?;
    state.validate()?;
    if !(step > 0.0 && step <= MAX_STEP) {
        return Err(Error::InvalidInput(alloc::format!("step must be in (0, {MAX_STEP}]")));
    }
    let mut s = *state;
    let mut pusher = push.start;
    let u = push.direction;
    let mut remaining = push.distance;
    let mut touched = false;
    let mut in_contact = s.shape.contains_strict(&s.pose.to_body(&pusher));
    if in_contact {
        // Started inside: treat the pusher as touching the nearest boundary.
        resolve_penetration(&mut s, &pusher);
        touched = true;
    }
    let mut guard = 0usize;
    while remaining > 1e-15 {
        guard += 1;
        if guard > 100_000 {
            break;
        }
        let ds = remaining.min(step / SUBSTEPS);
        if !in_contact {
            let p = s.pose.to_body(&pusher);
            let d = s.pose.vector_to_body(&(u * ds));
            match s.shape.first_entry(&p, &d) {
                Some((frac, _)) => {
                    let advance = ds * frac;
                    pusher += u * advance;
                    remaining -= advance;
                    in_contact = true;
                    touched = true;
                }
                None => {
                    pusher += u * ds;
                    remaining -= ds;
                }
            }
            continue;
        }
        let v_body = s.pose.vector_to_body(&u);
        let (r0, n0) = contact_frame(&s.shape, &s.pose.to_body(&pusher), &v_body);
        let Some((ax, ay, aw)) = contact_twist(&r0, &n0, &v_body, s.friction_param, s.pusher_friction) else {
            in_contact = false;
            continue;
        };
        // Midpoint rule: re-evaluate the twist half way through the increment.
        let half = s.pose.integrate_body_twist(ax * 0.5 * ds, ay * 0.5 * ds, aw * 0.5 * ds);
        let mid_pusher = pusher + u * (0.5 * ds);
        let v_mid = half.vector_to_body(&u);
        let (r1, n1) = contact_frame(&s.shape, &half.to_body(&mid_pusher), &v_mid);
        let (bx, by, bw) =
            contact_twist(&r1, &n1, &v_mid, s.friction_param, s.pusher_friction).unwrap_or((ax, ay, aw));
        s.pose = s.pose.integrate_body_twist(bx * ds, by * ds, bw * ds);
        pusher += u * ds;
        remaining -= ds;
        resolve_penetration(&mut s, &pusher);
        let gap = s.shape.closest_boundary_point(&s.pose.to_body(&pusher)).distance;
        if gap > CONTACT_SLACK {
            in_contact = false;
        }
    }
    Ok(PushOutcome {
        state: s,
        contact: touched,
    })
}

/// Translation-only prediction: every point moves by the push displacement
/// if the push touches the block.
pub fn heuristic_dynamics(state: &TBlockState, points: &[Vec2], push: &PushParams) -> Vec<Vec2> {
    if !state.push_contacts(push) {
        return points.to_vec();
    }
    let shift = push.direction * push.distance;
    points.iter().map(|p| p + shift).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn block() -> TBlockState {
        TBlockState::new(Pose2::new(0.0, 0.0, 0.0))
    }

    fn push(sx: f64, sy: f64, dx: f64, dy: f64, d: f64) -> PushParams {
        let dir = Vec2::new(dx, dy).normalize();
        PushParams::new(Vec2::new(sx, sy), dir, d).unwrap()
    }

    #[test]
    fn zero_distance_is_noop() {
        let out = simulate_push(&block(), &push(0.0, -0.08, 0.0, 1.0, 0.0), 0.005).unwrap();
        assert_eq!(out.state, block());
    }

    #[test]
    fn miss_leaves_block() {
        let out = simulate_push(&block(), &push(0.2, -0.2, 0.0, 1.0, 0.05), 0.005).unwrap();
        assert!(!out.contact);
        assert_eq!(out.state, block());
    }

    #[test]
    fn central_push_translates() {
        let out = simulate_push(&block(), &push(0.0, -0.085, 0.0, 1.0, 0.05), 0.005).unwrap();
        assert!(out.contact);
        let p = out.state.pose;
        assert!(p.theta.abs() < 1e-6, "{}", p.theta);
        assert!((p.y - 0.04).abs() < 1e-9, "{}", p.y);
        assert!(p.x.abs() < 1e-9);
    }

    #[test]
    fn off_center_push_rotates_with_torque_sign() {
        // Push the right crossbar tip upward from below.
        let start = Vec2::new(0.04, 0.005);
        let dir = Vec2::new(0.0, 1.0);
        let out = simulate_push(&block(), &PushParams::new(start, dir, 0.02).unwrap(), 0.001).unwrap();
        // Independent torque: contact at (0.04, 0.015), inward normal +y.
        let r = Vec2::new(0.04, 0.015);
        let torque = r.x * dir.y - r.y * dir.x;
        assert!(torque > 0.0);
        assert!(out.state.pose.theta > 1e-3 && out.state.pose.theta.signum() == torque.signum());

        let out = simulate_push(&block(), &PushParams::new(Vec2::new(-0.04, 0.005), dir, 0.02).unwrap(), 0.001).unwrap();
        assert!(out.state.pose.theta < -1e-3);
    }

    #[test]
    fn sticking_contact_moves_with_pusher() {
        let r = Vec2::new(0.01, -0.075);
        let n = Vec2::new(0.0, 1.0);
        let v = Vec2::new(0.0, 1.0);
        let (vx, vy, w) = contact_twist(&r, &n, &v, 0.05, 0.5).unwrap();
        // Contact point velocity equals the pusher velocity.
        let vc = Vec2::new(vx - w * r.y, vy + w * r.x);
        assert!((vc - v).norm() < 1e-12);
    }

    #[test]
    fn sliding_contact_matches_normal_velocity() {
        let r = Vec2::new(0.0, -0.075);
        let n = Vec2::new(0.0, 1.0);
        let v = Vec2::new(0.8, 0.6);
        let (vx, vy, w) = contact_twist(&r, &n, &v, 0.05, 0.1).unwrap();
        let vc = Vec2::new(vx - w * r.y, vy + w * r.x);
        assert!((vc.dot(&n) - v.dot(&n)).abs() < 1e-12);
        // Slip opposes the friction force: contact lags the pusher tangentially.
        assert!(vc.x < v.x);
    }

    #[test]
    fn step_refinement_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..40 {
            let target = Vec2::new(rng.random_range(-0.04..0.04), rng.random_range(-0.07..0.04));
            let angle = rng.random_range(0.0..core::f64::consts::TAU);
            let dir = Vec2::new(angle.cos(), angle.sin());
            let p = PushParams::new(target - dir * 0.12, dir, rng.random_range(0.1..0.2)).unwrap();
            let a = simulate_push(&block(), &p, 0.005).unwrap().state.pose;
            let b = simulate_push(&block(), &p, 0.0025).unwrap().state.pose;
            assert!(a.distance(&b) < 1e-3, "{a:?} {b:?}");
            assert!(a.angle_to(&b) < 0.5f64.to_radians(), "{a:?} {b:?}");
        }
    }

    #[test]
    fn heuristic_translates_only() {
        let st = block();
        let pts = st.shape.grid_particles(0.01);
        let p = push(0.0, -0.1, 1.0, 0.0, 0.05);
        assert_eq!(heuristic_dynamics(&st, &pts, &p), pts);
        let p = push(0.0, -0.1, 0.0, 1.0, 0.05);
        let out = heuristic_dynamics(&st, &pts, &p);
        for (a, b) in pts.iter().zip(&out) {
            assert!((b - a - Vec2::new(0.0, 0.05)).norm() < 1e-15);
        }
    }
}
