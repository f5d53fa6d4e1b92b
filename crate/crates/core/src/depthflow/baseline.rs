//! Rigid-trajectory baselines: one rigid transform per frame, fitted from the
//! first frame's points to each later frame's points.

use alloc::vec::Vec;

use super::flow::ObjectFlow3D;
use crate::se3::{fit_rigid_visible, RigidTransform};
use crate::{Error, Result};

/// Which baseline the trajectory is reported for. Both fit the same way here;
/// they differ only in the upstream trackers that produced the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineMode {
    Avdc,
    Rigvid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineFrame {
    /// Transform from frame-0 points to frame-`t` points.
    pub transform: RigidTransform,
    pub reliable: bool,
    pub correspondences: usize,
}

/// Per-frame rigid fit relative to frame 0. Frames with fewer than three
/// jointly visible points (or degenerate geometry) are flagged unreliable
/// and carry the previous transform forward.
pub fn baseline_rigid_trajectory(flow: &ObjectFlow3D, _mode: BaselineMode) -> Result<Vec<BaselineFrame>> {
    if flow.timesteps() == 0 {
        return Err(Error::InvalidInput("flow has no timesteps".into()));
    }
    let first_pos = flow.frame_positions(0);
    let first_vis = flow.frame_visibility(0);
    let first_count = first_vis.iter().filter(|v| **v).count();
    if first_count < 3 {
        return Err(Error::DegenerateCorrespondence(first_count));
    }
    let mut frames = Vec::with_capacity(flow.timesteps());
    let mut previous = RigidTransform::identity();
    for t in 0..flow.timesteps() {
        let joint: Vec<bool> = first_vis
            .iter()
            .zip(flow.frame_visibility(t))
            .map(|(a, b)| *a && *b)
            .collect();
        let correspondences = joint.iter().filter(|v| **v).count();
        let frame = match fit_rigid_visible(first_pos, flow.frame_positions(t), &joint) {
            Ok(tf) => BaselineFrame {
                transform: tf,
                reliable: true,
                correspondences,
            },
            Err(_) => BaselineFrame {
                transform: previous,
                reliable: false,
                correspondences,
            },
        };
        previous = frame.transform;
        frames.push(frame);
    }
    Ok(frames)
}

/// Sum over visible entries of `‖T_t·p_i^0 − P_t[i]‖²` for a baseline fit.
pub fn baseline_residual(flow: &ObjectFlow3D, frames: &[BaselineFrame]) -> f64 {
    let mut total = 0.0;
    for (t, frame) in frames.iter().enumerate() {
        for i in 0..flow.points() {
            if let (Some(p0), Some(pt)) = (flow.position(0, i), flow.position(t, i)) {
                total += (frame.transform.transform_point(&p0) - pt).norm_squared();
            }
        }
    }
    total
}
