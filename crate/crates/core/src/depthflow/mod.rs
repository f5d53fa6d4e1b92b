//! From 2D tracks and monocular depth to metric 3D object flow.
//!
//! The pipeline is: align the first predicted depth frame to the robot's
//! reference depth ([`calibrate_scale_shift`]), lift visible tracks into the
//! robot frame ([`lift_flow`]), keep the tracks that actually move
//! ([`filter_movable`]), then use the flow as a reference trajectory
//! ([`nearest_timestep`], [`select_subgoal`]). Rigid-fit baselines over the
//! same flow live in [`baseline`].

pub mod baseline;
mod calibrate;
mod flow;
mod lift;
mod matching;
mod movable;

pub use baseline::{baseline_rigid_trajectory, BaselineFrame, BaselineMode};
pub use calibrate::{calibrate_scale_shift, calibration_mask, ScaleShift};
pub use flow::{DepthMap, FlowBundle, Mask, ObjectFlow3D, Tracks2D};
pub use lift::{lift_flow, LiftReport};
pub use matching::{mean_distance, nearest_timestep, select_subgoal, FlowSlice, DEFAULT_LOOKAHEAD};
pub use movable::{filter_movable, MovableReport, DEFAULT_MOVABLE_THRESHOLD_PX};
