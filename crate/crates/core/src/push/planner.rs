use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::Rng;

use super::geometry::{cross, wrap_angle, Pose2, Vec2};
use super::sim::{heuristic_dynamics, simulate_push, PushParams, TBlockState};
use crate::depthflow::{nearest_timestep, select_subgoal, ObjectFlow3D, DEFAULT_LOOKAHEAD};
use crate::rng::{stage_rng, Stage};
use crate::{Error, Result, Vec3};

/// Success thresholds.
pub const SUCCESS_TRANSLATION: f64 = 0.02;
pub const SUCCESS_ROTATION: f64 = 15.0 * PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dynamics {
    /// The simulator itself.
    Oracle,
    /// Translate the block by the push without rotating it.
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub d_min: f64,
    pub d_max: f64,
    /// Backward offset of the push start from the sampled boundary point.
    pub clearance: f64,
    /// Largest angle between push direction and inward normal, radians.
    pub max_angle: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            d_min: 0.01,
            d_max: 0.08,
            clearance: 0.005,
            max_angle: PI / 3.0,
        }
    }
}

/// One sampled push with the boundary point and edge it was built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledPush {
    pub push: PushParams,
    pub edge: usize,
    /// Body-frame boundary point.
    pub anchor: Vec2,
}

/// Samples `r` contacting pushes around the block boundary.
pub fn sample_pushes<R: Rng + ?Sized>(state: &TBlockState, rng: &mut R, r: usize, cfg: &SamplerConfig) -> Vec<SampledPush> {
    let shape = &state.shape;
    let lengths: Vec<f64> = (0..8)
        .map(|k| {
            let (a, b) = shape.edge(k);
            (b - a).norm()
        })
        .collect();
    let perimeter: f64 = lengths.iter().sum();
    let mut out = Vec::with_capacity(r);
    while out.len() < r {
        let mut s = rng.random_range(0.0..perimeter);
        let mut edge = 0;
        while edge < 7 && s > lengths[edge] {
            s -= lengths[edge];
            edge += 1;
        }
        let (a, b) = shape.edge(edge);
        let anchor = a + (b - a) * (s / lengths[edge]).min(1.0);
        let inward = -shape.outward_normal(edge);
        let angle = rng.random_range(-cfg.max_angle..=cfg.max_angle);
        let (sn, cs) = Float::sin_cos(angle);
        let dir_body = Vec2::new(cs * inward.x - sn * inward.y, sn * inward.x + cs * inward.y);
        let distance = rng.random_range(cfg.d_min..=cfg.d_max);
        let start_body = anchor - dir_body * cfg.clearance;
        let push = PushParams {
            start: state.pose.to_world(&start_body),
            direction: state.pose.vector_to_world(&dir_body).normalize(),
            distance,
        };
        if shape.contains_strict(&start_body) || !state.push_contacts(&push) {
            continue;
        }
        out.push(SampledPush { push, edge, anchor });
    }
    out
}

/// Planar least-squares rigid fit from body points onto observed points.
pub fn fit_pose2(body: &[Vec2], observed: &[Vec2]) -> Result<Pose2> {
    if body.len() != observed.len() || body.len() < 2 {
        return Err(Error::DegenerateCorrespondence(body.len().min(observed.len())));
    }
    let n = body.len() as f64;
    let cb = body.iter().sum::<Vec2>() / n;
    let co = observed.iter().sum::<Vec2>() / n;
    let (mut sin_sum, mut cos_sum) = (0.0, 0.0);
    for (b, o) in body.iter().zip(observed) {
        let (b, o) = (b - cb, o - co);
        sin_sum += cross(&b, &o);
        cos_sum += b.dot(&o);
    }
    if sin_sum.abs() + cos_sum.abs() < 1e-18 {
        return Err(Error::DegenerateGeometry);
    }
    let theta = Float::atan2(sin_sum, cos_sum);
    let (s, c) = Float::sin_cos(theta);
    let rcb = Vec2::new(c * cb.x - s * cb.y, s * cb.x + c * cb.y);
    let t = co - rcb;
    Ok(Pose2::new(t.x, t.y, theta))
}

/// Index of the nearest candidate for each query (ties to the lower index).
pub fn nearest_neighbors(queries: &[Vec2], candidates: &[Vec2]) -> Vec<usize> {
    queries
        .iter()
        .map(|q| {
            let mut best = (f64::INFINITY, 0usize);
            for (k, c) in candidates.iter().enumerate() {
                let d = (q - c).norm_squared();
                if d < best.0 {
                    best = (d, k);
                }
            }
            best.1
        })
        .collect()
}

/// Inclusive translation and rotation thresholds against a goal pose.
pub fn check_success(state: &Pose2, goal: &Pose2) -> bool {
    state.distance(goal) <= SUCCESS_TRANSLATION + 1e-12
        && Float::abs(wrap_angle(state.theta - goal.theta)) <= SUCCESS_ROTATION + 1e-12
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerConfig {
    /// Shooting samples per replanning step.
    pub samples: usize,
    pub lookahead: usize,
    pub max_pushes: usize,
    pub seed: u64,
    /// Simulator integration step, meters.
    pub sim_step: f64,
    /// Spacing of the scene particles used by the dynamics models.
    pub scene_spacing: f64,
    pub sampler: SamplerConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            samples: 64,
            lookahead: DEFAULT_LOOKAHEAD,
            max_pushes: 20,
            seed: 0,
            sim_step: 0.005,
            scene_spacing: 0.005,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PushRecord {
    pub push: PushParams,
    /// Predicted particle cost of the chosen push.
    pub predicted_cost: f64,
    /// Block pose after executing the push.
    pub pose: Pose2,
    pub t_star: usize,
    pub subgoal: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PushEpisode {
    pub start: Pose2,
    pub goal: Pose2,
    pub pushes: Vec<PushRecord>,
    pub final_pose: Pose2,
    pub success: bool,
}

fn planar(flow: &ObjectFlow3D, t: usize) -> Vec<Vec2> {
    flow.frame_positions(t).iter().map(|p| Vec2::new(p.x, p.y)).collect()
}

fn lift(points: &[Vec2]) -> Vec<Vec3> {
    points.iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect()
}

/// Random-shooting push planning with replanning after every push.
///
/// The flow must be fully visible in its first and last frames; its
/// first frame is taken to be the block at `start`.
pub fn plan_push_episode(
    start: &TBlockState,
    flow: &ObjectFlow3D,
    dynamics: Dynamics,
    cfg: &PlannerConfig,
) -> Result<PushEpisode> {
    start.validate()?;
    if cfg.samples == 0 {
        return Err(Error::InvalidInput("at least one shooting sample is required".into()));
    }
    if flow.timesteps() == 0 || flow.points() < 3 {
        return Err(Error::PlanningFailure("flow needs at least one frame and three particles".into()));
    }
    let last = flow.timesteps() - 1;
    if flow.frame_visibility(0).iter().any(|v| !v) || flow.frame_visibility(last).iter().any(|v| !v) {
        return Err(Error::PlanningFailure("first and last flow frames must be fully visible".into()));
    }
    let body: Vec<Vec2> = planar(flow, 0).iter().map(|p| start.pose.to_body(p)).collect();
    let goal = fit_pose2(&body, &planar(flow, last))
        .map_err(|e| Error::PlanningFailure(alloc::format!("cannot fit goal pose: {e}")))?;
    let scene_body = start.shape.grid_particles(cfg.scene_spacing);
    if scene_body.len() < 3 {
        return Err(Error::PlanningFailure("scene particle grid is too coarse".into()));
    }
    // Tracked particles ride on their nearest scene particle.
    let matches = nearest_neighbors(&body, &scene_body);
    let all_visible = alloc::vec![true; flow.points()];

    let mut rng = stage_rng(cfg.seed, Stage::PushSampling);
    let mut state = *start;
    let mut pushes = Vec::new();
    let mut success = check_success(&state.pose, &goal);
    while !success && pushes.len() < cfg.max_pushes {
        let tracked: Vec<Vec2> = body.iter().map(|b| state.pose.to_world(b)).collect();
        let t_star = nearest_timestep(&lift(&tracked), &all_visible, flow)
            .map_err(|e| Error::PlanningFailure(alloc::format!("no matching flow frame: {e}")))?;
        let sub = select_subgoal(t_star, flow, cfg.lookahead);
        let scene: Vec<Vec2> = scene_body.iter().map(|b| state.pose.to_world(b)).collect();

        let candidates = sample_pushes(&state, &mut rng, cfg.samples, &cfg.sampler);
        let mut best: Option<(f64, usize)> = None;
        for (k, cand) in candidates.iter().enumerate() {
            let moved = match dynamics {
                Dynamics::Oracle => {
                    let next = simulate_push(&state, &cand.push, cfg.sim_step)?.state;
                    scene_body.iter().map(|b| next.pose.to_world(b)).collect()
                }
                Dynamics::Heuristic => heuristic_dynamics(&state, &scene, &cand.push),
            };
            let mut cost = 0.0;
            for (i, p) in tracked.iter().enumerate() {
                if sub.visibility[i] {
                    let predicted = p + (moved[matches[i]] - scene[matches[i]]);
                    let target = Vec2::new(sub.points[i].x, sub.points[i].y);
                    cost += (predicted - target).norm_squared();
                }
            }
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, k));
            }
        }
        let (predicted_cost, k) = best.expect("at least one candidate");
        let chosen = candidates[k].push;
        state = simulate_push(&state, &chosen, cfg.sim_step)?.state;
        pushes.push(PushRecord {
            push: chosen,
            predicted_cost,
            pose: state.pose,
            t_star,
            subgoal: sub.index,
        });
        success = check_success(&state.pose, &goal);
    }
    Ok(PushEpisode {
        start: start.pose,
        goal,
        pushes,
        final_pose: state.pose,
        success,
    })
}

/// Flow of the template particles moving linearly in `(x, y, θ)` from
/// `from` to `to` over `timesteps` frames.
pub fn straight_flow(template: &[Vec2], from: &Pose2, to: &Pose2, timesteps: usize) -> Result<ObjectFlow3D> {
    if timesteps < 2 {
        return Err(Error::InvalidInput("flow needs at least two frames".into()));
    }
    let dtheta = wrap_angle(to.theta - from.theta);
    let frames: Vec<Vec<Vec3>> = (0..timesteps)
        .map(|t| {
            let s = t as f64 / (timesteps - 1) as f64;
            let pose = Pose2::new(
                from.x + (to.x - from.x) * s,
                from.y + (to.y - from.y) * s,
                from.theta + dtheta * s,
            );
            lift(&template.iter().map(|b| pose.to_world(b)).collect::<Vec<_>>())
        })
        .collect();
    ObjectFlow3D::from_frames(&frames)
}
