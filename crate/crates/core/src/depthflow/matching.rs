use alloc::vec::Vec;

use super::flow::ObjectFlow3D;
use crate::se3::Vec3;
use crate::{Error, Result};

/// Lookahead used when turning a matched timestep into a subgoal.
pub const DEFAULT_LOOKAHEAD: usize = 20;

/// Mean Euclidean distance over points visible in both sets, with the
/// number of such points.
pub fn mean_distance(a: &[Vec3], a_vis: &[bool], b: &[Vec3], b_vis: &[bool]) -> Option<(f64, usize)> {
    let (mut total, mut count) = (0.0, 0usize);
    for k in 0..a.len().min(b.len()) {
        if a_vis[k] && b_vis[k] {
            total += (a[k] - b[k]).norm();
            count += 1;
        }
    }
    (count > 0).then(|| (total / count as f64, count))
}

/// Index of the flow timestep closest to `current` (mean distance over
/// jointly visible points). Ties go to the earliest timestep; timesteps with
/// no jointly visible point are skipped.
pub fn nearest_timestep(current: &[Vec3], visible: &[bool], flow: &ObjectFlow3D) -> Result<usize> {
    if current.len() != flow.points() || visible.len() != flow.points() {
        return Err(Error::InvalidInput(alloc::format!(
            "current state has {} points, flow has {}",
            current.len(),
            flow.points()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for t in 0..flow.timesteps() {
        let Some((d, _)) = mean_distance(current, visible, flow.frame_positions(t), flow.frame_visibility(t)) else {
            continue;
        };
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((t, d));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::MatchingFailure)
}

/// One timestep of a flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSlice {
    pub index: usize,
    pub points: Vec<Vec3>,
    pub visibility: Vec<bool>,
}

/// Flow slice at `min(t_star + lookahead, t_end)`.
pub fn select_subgoal(t_star: usize, flow: &ObjectFlow3D, lookahead: usize) -> FlowSlice {
    let t_end = flow.timesteps().saturating_sub(1);
    let index = t_star.saturating_add(lookahead).min(t_end);
    FlowSlice {
        index,
        points: flow.frame_positions(index).to_vec(),
        visibility: flow.frame_visibility(index).to_vec(),
    }
}
