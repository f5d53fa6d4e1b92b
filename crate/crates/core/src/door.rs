//! Kinematic door with a lever handle, the hand-designed object-state
//! reward, and the flow-based particle reward.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use num_traits::Float;

use crate::depthflow::{nearest_timestep, ObjectFlow3D};
use crate::se3::{RigidTransform, Vec3};
use crate::{Error, Result};

/// Hinge angle above which the object-state reward pays the completion bonus.
pub const COMPLETION_HINGE_ANGLE: f64 = 0.3;
/// Hinge angle counted as an opened door (17°).
pub const SUCCESS_HINGE_ANGLE: f64 = 17.0 * core::f64::consts::PI / 180.0;
/// Longest allowed episode.
pub const MAX_HORIZON: usize = 500;

/// Door dimensions and limits. The door frame has its z axis along the
/// hinge; at zero hinge angle the panel spans `x ∈ [0, width]` in the
/// `y = 0` plane and its handle side faces `−y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoorGeometry {
    /// Door frame in world coordinates.
    pub frame: RigidTransform,
    pub width: f64,
    pub height: f64,
    /// Lever pivot on the panel face, door frame at zero hinge angle.
    pub handle_pivot: Vec3,
    pub lever_length: f64,
    pub hinge_limits: (f64, f64),
    pub handle_limits: (f64, f64),
    /// Largest per-step change of the hinge and handle angles, radians.
    pub max_angle_step: f64,
    /// Largest per-step end-effector displacement, meters.
    pub max_ee_step: f64,
}

impl Default for DoorGeometry {
    fn default() -> Self {
        Self {
            frame: RigidTransform::identity(),
            width: 0.8,
            height: 2.0,
            handle_pivot: Vec3::new(0.7, -0.03, 1.0),
            lever_length: 0.12,
            hinge_limits: (0.0, FRAC_PI_2),
            handle_limits: (-FRAC_PI_2, FRAC_PI_2),
            max_angle_step: 0.05,
            max_ee_step: 0.05,
        }
    }
}

impl DoorGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.width, self.height, self.lever_length, self.max_angle_step, self.max_ee_step];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidInput("door dimensions and step limits must be positive".into()));
        }
        if !(self.hinge_limits.0 < self.hinge_limits.1 && self.handle_limits.0 < self.handle_limits.1) {
            return Err(Error::InvalidInput("door joint limits are empty".into()));
        }
        Ok(())
    }

    /// Door-frame transform of the panel at a hinge angle.
    pub fn panel_transform(&self, hinge: f64) -> RigidTransform {
        RigidTransform::rotation_z(hinge)
    }

    /// Panel particles on a regular grid, door frame at zero hinge angle.
    pub fn particle_template(&self, columns: usize, rows: usize) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(columns * rows);
        for r in 0..rows {
            for c in 0..columns {
                let x = self.width * (c as f64 + 0.5) / columns as f64;
                let z = self.height * (r as f64 + 0.5) / rows as f64;
                out.push(Vec3::new(x, 0.0, z));
            }
        }
        out
    }

    /// Door-frame reference flow of `template` for a hinge swinging
    /// linearly from `from` to `to` over `timesteps` frames.
    pub fn hinge_flow(&self, template: &[Vec3], from: f64, to: f64, timesteps: usize) -> Result<ObjectFlow3D> {
        if timesteps < 2 {
            return Err(Error::InvalidInput("flow needs at least two frames".into()));
        }
        let frames: Vec<Vec<Vec3>> = (0..timesteps)
            .map(|t| {
                let angle = from + (to - from) * t as f64 / (timesteps - 1) as f64;
                let panel = self.panel_transform(angle);
                template.iter().map(|p| panel.transform_point(p)).collect()
            })
            .collect();
        ObjectFlow3D::from_frames(&frames)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoorState {
    pub hinge_angle: f64,
    pub handle_angle: f64,
    /// World coordinates.
    pub ee_position: Vec3,
    pub geometry: DoorGeometry,
}

impl DoorState {
    pub fn closed(geometry: DoorGeometry, ee_position: Vec3) -> Self {
        Self {
            hinge_angle: 0.0,
            handle_angle: 0.0,
            ee_position,
            geometry,
        }
    }

    /// Lever midpoint in world coordinates. At zero handle angle the lever
    /// points from the pivot toward the hinge; turning it rotates the lever
    /// about the panel normal.
    pub fn handle_position(&self) -> Vec3 {
        let g = &self.geometry;
        let (s, c) = Float::sin_cos(self.handle_angle);
        let half = 0.5 * g.lever_length;
        let lever = Vec3::new(-half * c, 0.0, -half * s);
        let door = self.geometry.panel_transform(self.hinge_angle).transform_point(&(g.handle_pivot + lever));
        g.frame.transform_point(&door)
    }

    pub fn ee_in_door_frame(&self) -> Vec3 {
        self.geometry.frame.inverse().transform_point(&self.ee_position)
    }

    pub fn gripper_handle_distance(&self) -> f64 {
        (self.ee_position - self.handle_position()).norm()
    }

    /// Template particles moved with the panel, door frame.
    pub fn particles(&self, template: &[Vec3]) -> Vec<Vec3> {
        let panel = self.geometry.panel_transform(self.hinge_angle);
        template.iter().map(|p| panel.transform_point(p)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoorAction {
    pub hinge: f64,
    pub handle: f64,
    /// World-frame end-effector displacement.
    pub ee: Vec3,
}

/// Applies one bounded action: deltas are clipped to the per-step limits and
/// the resulting angles to the joint ranges.
pub fn door_step(state: &DoorState, action: &DoorAction) -> DoorState {
    let g = &state.geometry;
    let lim = g.max_angle_step;
    let dh = action.hinge.clamp(-lim, lim);
    let dl = action.handle.clamp(-lim, lim);
    let mut de = action.ee;
    let n = de.norm();
    if n > g.max_ee_step {
        de *= g.max_ee_step / n;
    }
    DoorState {
        hinge_angle: (state.hinge_angle + dh).clamp(g.hinge_limits.0, g.hinge_limits.1),
        handle_angle: (state.handle_angle + dl).clamp(g.handle_limits.0, g.handle_limits.1),
        ee_position: state.ee_position + de,
        geometry: state.geometry,
    }
}

/// Reaching plus handle-rotation shaping, with a completion bonus once the
/// door is open past [`COMPLETION_HINGE_ANGLE`].
pub fn object_state_reward(state: &DoorState) -> f64 {
    if state.hinge_angle > COMPLETION_HINGE_ANGLE {
        return 1.0;
    }
    reach_term(state.gripper_handle_distance()) + rotation_term(state.handle_angle)
}

pub fn reach_term(distance: f64) -> f64 {
    0.25 * (1.0 - Float::tanh(10.0 * distance))
}

pub fn rotation_term(handle_angle: f64) -> f64 {
    (0.25 * Float::abs(handle_angle) / FRAC_PI_2).clamp(-0.25, 0.25)
}

/// Reference flow and particle template for the flow reward, both in the
/// door frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowRewardContext {
    pub flow: ObjectFlow3D,
    pub template: Vec<Vec3>,
}

impl FlowRewardContext {
    pub fn new(flow: ObjectFlow3D, template: Vec<Vec3>) -> Result<Self> {
        if template.is_empty() {
            return Err(Error::InvalidInput("particle template is empty".into()));
        }
        if flow.points() != template.len() {
            return Err(Error::InvalidInput(alloc::format!(
                "flow has {} points, template has {}",
                flow.points(),
                template.len()
            )));
        }
        if flow.timesteps() == 0 {
            return Err(Error::NoTarget);
        }
        Ok(Self { flow, template })
    }

    /// Final timestep, counted from one.
    pub fn t_end(&self) -> usize {
        self.flow.timesteps()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowReward {
    pub reward: f64,
    pub particle: f64,
    pub ee: f64,
    /// Matched timestep, counted from one.
    pub t_star: usize,
}

/// Progress along the reference flow plus end-effector proximity to the
/// particle mean.
pub fn flow_reward(state: &DoorState, ctx: &FlowRewardContext) -> Result<FlowReward> {
    let particles = state.particles(&ctx.template);
    let visible = alloc::vec![true; particles.len()];
    let t_star = nearest_timestep(&particles, &visible, &ctx.flow)? + 1;
    let particle = 0.75 * t_star as f64 / ctx.t_end() as f64;
    let mean = particles.iter().sum::<Vec3>() / particles.len() as f64;
    let ee = reach_term((state.ee_in_door_frame() - mean).norm());
    Ok(FlowReward {
        reward: particle + ee,
        particle,
        ee,
        t_star,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardKind {
    ObjectState,
    Flow,
}

/// Target for the scripted policy: door-frame end-effector position and
/// joint angles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub ee: Vec3,
    pub handle: f64,
    pub hinge: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeStep {
    pub step: usize,
    pub reward: f64,
    /// Only for the flow reward.
    pub t_star: Option<usize>,
    pub particle_reward: Option<f64>,
    pub hinge_angle: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeReport {
    pub steps: Vec<EpisodeStep>,
    pub success: bool,
    /// First step at which the door counted as open.
    pub success_step: Option<usize>,
    pub final_state: DoorState,
}

const WAYPOINT_TOLERANCE: f64 = 1e-9;

/// Rolls a waypoint-following policy for `horizon` steps, moving toward the
/// current waypoint at the per-step limits and holding once the list is
/// exhausted.
pub fn evaluate_scripted_episode(
    start: &DoorState,
    waypoints: &[Waypoint],
    ctx: Option<&FlowRewardContext>,
    kind: RewardKind,
    horizon: usize,
) -> Result<EpisodeReport> {
    start.geometry.validate()?;
    if horizon == 0 || horizon > MAX_HORIZON {
        return Err(Error::InvalidInput(alloc::format!("horizon must be in 1..={MAX_HORIZON}")));
    }
    if kind == RewardKind::Flow && ctx.is_none() {
        return Err(Error::InvalidInput("flow reward needs a reference flow".into()));
    }
    let frame = start.geometry.frame;
    let mut state = *start;
    let mut next = 0usize;
    let mut steps = Vec::with_capacity(horizon);
    let mut success_step = None;
    for step in 0..horizon {
        while next < waypoints.len() && reached(&state, &waypoints[next]) {
            next += 1;
        }
        let action = match waypoints.get(next) {
            Some(w) => DoorAction {
                hinge: w.hinge - state.hinge_angle,
                handle: w.handle - state.handle_angle,
                ee: frame.transform_point(&w.ee) - state.ee_position,
            },
            None => DoorAction::default(),
        };
        state = door_step(&state, &action);
        let (reward, t_star, particle_reward) = match kind {
            RewardKind::ObjectState => (object_state_reward(&state), None, None),
            RewardKind::Flow => {
                let r = flow_reward(&state, ctx.expect("checked above"))?;
                (r.reward, Some(r.t_star), Some(r.particle))
            }
        };
        if success_step.is_none() && state.hinge_angle >= SUCCESS_HINGE_ANGLE {
            success_step = Some(step);
        }
        steps.push(EpisodeStep {
            step,
            reward,
            t_star,
            particle_reward,
            hinge_angle: state.hinge_angle,
        });
    }
    Ok(EpisodeReport {
        steps,
        success: success_step.is_some(),
        success_step,
        final_state: state,
    })
}

fn reached(state: &DoorState, w: &Waypoint) -> bool {
    let ee = state.ee_in_door_frame();
    let g = &state.geometry;
    let hinge = w.hinge.clamp(g.hinge_limits.0, g.hinge_limits.1);
    let handle = w.handle.clamp(g.handle_limits.0, g.handle_limits.1);
    (ee - w.ee).norm() <= WAYPOINT_TOLERANCE
        && Float::abs(state.hinge_angle - hinge) <= WAYPOINT_TOLERANCE
        && Float::abs(state.handle_angle - handle) <= WAYPOINT_TOLERANCE
}

/// Reach the handle, turn it, then swing the door to `open_angle` while
/// the end-effector follows the handle.
pub fn scripted_opener(geometry: &DoorGeometry, open_angle: f64) -> Vec<Waypoint> {
    let at = |hinge: f64, handle: f64| {
        let s = DoorState {
            hinge_angle: hinge,
            handle_angle: handle,
            ee_position: Vec3::zeros(),
            geometry: DoorGeometry {
                frame: RigidTransform::identity(),
                ..*geometry
            },
        };
        s.handle_position()
    };
    let turned = 0.8;
    let mut out = alloc::vec![
        Waypoint {
            ee: at(0.0, 0.0),
            handle: 0.0,
            hinge: 0.0
        },
        Waypoint {
            ee: at(0.0, turned),
            handle: turned,
            hinge: 0.0
        },
    ];
    let pieces = 10;
    for k in 1..=pieces {
        let hinge = open_angle * k as f64 / pieces as f64;
        out.push(Waypoint {
            ee: at(hinge, turned),
            handle: turned,
            hinge,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> DoorState {
        DoorState::closed(DoorGeometry::default(), Vec3::new(0.5, -0.5, 1.0))
    }

    #[test]
    fn object_state_boundaries() {
        let mut s = state();
        s.ee_position = s.handle_position();
        assert!((object_state_reward(&s) - 0.25).abs() < 1e-12);
        s.handle_angle = FRAC_PI_2;
        s.ee_position = Vec3::new(1e6, 0.0, 0.0);
        assert!((rotation_term(s.handle_angle) - 0.25).abs() < 1e-12);
        assert!((object_state_reward(&s) - 0.25).abs() < 1e-9);
        // The clip caps the handle term even past π/2.
        assert_eq!(rotation_term(3.0), 0.25);
        s.hinge_angle = 0.35;
        assert_eq!(object_state_reward(&s), 1.0);
        s.hinge_angle = 0.3;
        assert!(object_state_reward(&s) < 1.0);
    }

    #[test]
    fn completion_implies_success() {
        const { assert!(COMPLETION_HINGE_ANGLE >= SUCCESS_HINGE_ANGLE) };
    }

    #[test]
    fn reach_is_strictly_decreasing() {
        // tanh saturates in f64 past 10·d ≈ 18, so stay below 1.5 m.
        let mut last = reach_term(0.0);
        for k in 1..150 {
            let r = reach_term(k as f64 * 0.01);
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn step_updates() {
        let s = state();
        assert_eq!(door_step(&s, &DoorAction::default()), s);
        let n = door_step(
            &s,
            &DoorAction {
                hinge: 0.04,
                ..DoorAction::default()
            },
        );
        assert!((n.hinge_angle - 0.04).abs() < 1e-15);
        // Oversized deltas are clipped to the step limit.
        let n = door_step(
            &s,
            &DoorAction {
                hinge: 0.1,
                ..DoorAction::default()
            },
        );
        assert!((n.hinge_angle - 0.05).abs() < 1e-15);
        let template = s.geometry.particle_template(4, 5);
        let rot = RigidTransform::from_axis_angle(&Vec3::z(), 0.05, Vec3::zeros());
        for (p, q) in n.particles(&template).iter().zip(&template) {
            assert!((p - rot.transform_point(q)).norm() < 1e-15);
        }
    }

    #[test]
    fn handle_follows_hinge_and_lever() {
        let mut s = state();
        let h0 = s.handle_position();
        assert!((h0 - Vec3::new(0.64, -0.03, 1.0)).norm() < 1e-12);
        s.handle_angle = FRAC_PI_2;
        assert!((s.handle_position() - Vec3::new(0.7, -0.03, 0.94)).norm() < 1e-12);
        s.handle_angle = 0.0;
        s.hinge_angle = FRAC_PI_2;
        assert!((s.handle_position() - Vec3::new(0.03, 0.64, 1.0)).norm() < 1e-12);
    }

    fn context(t_end: usize, open: f64) -> FlowRewardContext {
        let g = DoorGeometry::default();
        let template = g.particle_template(4, 6);
        let flow = g.hinge_flow(&template, 0.0, open, t_end).unwrap();
        FlowRewardContext::new(flow, template).unwrap()
    }

    #[test]
    fn flow_reward_examples() {
        let ctx = context(100, 0.6);
        let mut s = state();
        s.hinge_angle = 0.6;
        let mean = s.particles(&ctx.template).iter().sum::<Vec3>() / ctx.template.len() as f64;
        s.ee_position = mean;
        let r = flow_reward(&s, &ctx).unwrap();
        assert_eq!(r.t_star, 100);
        assert!((r.reward - 1.0).abs() < 1e-9);

        s.hinge_angle = 0.0;
        s.ee_position = Vec3::new(100.0, 0.0, 0.0);
        let r = flow_reward(&s, &ctx).unwrap();
        assert_eq!(r.t_star, 1);
        assert!((r.reward - 0.75 / 100.0).abs() < 1e-9);

        s.hinge_angle = 0.3;
        let r = flow_reward(&s, &ctx).unwrap();
        // Independent scan over the linear-in-angle flow.
        let mut best = (f64::INFINITY, 0);
        for t in 0..100 {
            let angle = 0.6 * t as f64 / 99.0;
            let d = (angle - 0.3).abs();
            if d < best.0 {
                best = (d, t + 1);
            }
        }
        assert!(r.t_star.abs_diff(best.1) <= 1);
        assert!(r.t_star.abs_diff(50) <= 1);
        assert!((r.particle - 0.375).abs() < 0.0075 + 1e-12);
    }

    #[test]
    fn scripted_opener_succeeds() {
        let ctx = context(100, 0.4);
        let g = DoorGeometry::default();
        let plan = scripted_opener(&g, 0.35);
        let rep = evaluate_scripted_episode(&state(), &plan, Some(&ctx), RewardKind::Flow, 500).unwrap();
        assert!(rep.success);
        assert!((rep.final_state.hinge_angle - 0.35).abs() < 1e-9);
        let particle: Vec<f64> = rep.steps.iter().map(|s| s.particle_reward.unwrap()).collect();
        assert!(particle.windows(2).all(|w| w[1] >= w[0]));
        for s in &rep.steps {
            assert!(s.reward > 0.0 && s.reward <= 1.0);
        }
        let rep = evaluate_scripted_episode(&state(), &plan, None, RewardKind::ObjectState, 500).unwrap();
        assert!(rep.success);
        assert_eq!(rep.steps.last().unwrap().reward, 1.0);
    }

    #[test]
    fn idle_policy_fails_flat() {
        let ctx = context(50, 0.4);
        for kind in [RewardKind::ObjectState, RewardKind::Flow] {
            let rep = evaluate_scripted_episode(&state(), &[], Some(&ctx), kind, 100).unwrap();
            assert!(!rep.success);
            let first = rep.steps[0].reward;
            assert!(rep.steps.iter().all(|s| s.reward == first));
        }
    }
}
