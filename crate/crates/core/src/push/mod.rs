//! Planar pushing of a T-shaped block: a quasi-static simulator, a
//! translation-only heuristic model, and a random-shooting planner that
//! follows a particle flow.

mod geometry;
mod planner;
mod sim;

pub use geometry::{wrap_angle, BoundaryPoint, Pose2, TBlockShape, Vec2};
pub use planner::{
    check_success, fit_pose2, nearest_neighbors, plan_push_episode, sample_pushes, straight_flow, Dynamics,
    PlannerConfig, PushEpisode, PushRecord, SampledPush, SamplerConfig, SUCCESS_ROTATION, SUCCESS_TRANSLATION,
};
pub use sim::{
    heuristic_dynamics, simulate_push, PushOutcome, PushParams, TBlockState, DEFAULT_LIMIT_SURFACE_C,
    DEFAULT_PUSHER_FRICTION, MAX_STEP,
};
