//! Rigid-grasp flow tracking: pick a grasp, optimize a joint trajectory so
//! the grasped points follow the 3D object flow, and resample the resulting
//! end-effector path for execution.

mod bspline;
mod grasp;
mod lm;
mod problem;

pub use bspline::{bspline_resample, ResampleResult, DEFAULT_MIN_ROTATION, DEFAULT_MIN_TRANSLATION};
pub use grasp::{
    grasped_subset, rigid_grasp_rollout, select_grasp, GraspCandidate, GraspReason, GraspSelection,
    ThumbTrajectory, DEFAULT_GRASP_RADIUS, THUMB_GRASP_DISTANCE,
};
pub use lm::{initial_guess_from_flow, optimize_trajectory, LmOptions, TrajOptResult, TrajectorySeed};
pub use problem::{time_warp_indices, CostBreakdown, TrackingProblem};

/// Weights of the four trajectory cost terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    /// Flow tracking.
    pub task: f64,
    /// Joint-limit hinge.
    pub reach: f64,
    /// Consecutive end-effector pose differences.
    pub smooth: f64,
    /// Negated manipulability.
    pub manip: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            task: 10.0,
            reach: 100.0,
            smooth: 1.0,
            manip: 0.01,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> crate::Result<()> {
        let all = [self.task, self.reach, self.smooth, self.manip];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(crate::Error::InvalidInput("cost weights must be finite and non-negative".into()))
        }
    }
}
