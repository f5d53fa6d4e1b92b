use alloc::vec::Vec;

use crate::se3::{RigidTransform, Vec3};
use crate::{Error, Result};

/// Thumb-to-grasp distance (meters, inclusive) that selects a grasp.
pub const THUMB_GRASP_DISTANCE: f64 = 0.02;
/// Movable points within this distance of the grasp form the grasped set.
pub const DEFAULT_GRASP_RADIUS: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct GraspCandidate {
    pub pose: RigidTransform,
    pub score: f64,
}

/// Detected thumb positions per video timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct ThumbTrajectory {
    pub positions: Vec<Vec3>,
    pub detected: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GraspReason {
    /// A candidate came within reach of the thumb at `timestep`.
    Thumb { timestep: usize, distance: f64 },
    /// No thumb contact; nearest candidate to the movable-point centroid.
    MovableCentroid { distance: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraspSelection {
    pub index: usize,
    pub candidate: GraspCandidate,
    pub reason: GraspReason,
}

/// Earliest timestep at which the thumb comes within
/// [`THUMB_GRASP_DISTANCE`] of a candidate wins, taking the closest such
/// candidate. Otherwise falls back to the candidate nearest the centroid of
/// the movable points.
pub fn select_grasp(
    candidates: &[GraspCandidate],
    thumb: &ThumbTrajectory,
    movable_points: &[Vec3],
) -> Result<GraspSelection> {
    if candidates.is_empty() {
        return Err(Error::NoGrasp);
    }
    let nearest = |target: &Vec3| {
        candidates
            .iter()
            .enumerate()
            .map(|(k, c)| (k, (c.pose.translation() - target).norm()))
            .fold(None, |best: Option<(usize, f64)>, (k, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((k, d)),
            })
            .expect("non-empty candidates")
    };
    for (t, (pos, seen)) in thumb.positions.iter().zip(&thumb.detected).enumerate() {
        if !*seen || !pos.iter().all(|v| v.is_finite()) {
            continue;
        }
        let (k, d) = nearest(pos);
        if d <= THUMB_GRASP_DISTANCE {
            return Ok(GraspSelection {
                index: k,
                candidate: candidates[k].clone(),
                reason: GraspReason::Thumb { timestep: t, distance: d },
            });
        }
    }
    if movable_points.is_empty() {
        return Err(Error::InvalidInput("no thumb contact and no movable points for fallback".into()));
    }
    let centroid = movable_points.iter().sum::<Vec3>() / movable_points.len() as f64;
    let (k, d) = nearest(&centroid);
    Ok(GraspSelection {
        index: k,
        candidate: candidates[k].clone(),
        reason: GraspReason::MovableCentroid { distance: d },
    })
}

/// Movable points visible in the first frame and within `radius` of the
/// grasp position.
pub fn grasped_subset(
    points0: &[Vec3],
    visible0: &[bool],
    movable: &[usize],
    grasp: &RigidTransform,
    radius: f64,
) -> Vec<usize> {
    movable
        .iter()
        .copied()
        .filter(|&i| visible0[i] && (points0[i] - grasp.translation()).norm() <= radius)
        .collect()
}

/// Rigid-grasp dynamics: grasped points ride along with the end effector
/// (`p_t = T_t·T_0⁻¹·p_0` with `T_0` the grasp pose); the rest stay put.
pub fn rigid_grasp_rollout(
    grasp: &RigidTransform,
    ee_poses: &[RigidTransform],
    points0: &[Vec3],
    grasped: &[usize],
) -> Vec<Vec<Vec3>> {
    let mut mask = alloc::vec![false; points0.len()];
    for &i in grasped {
        mask[i] = true;
    }
    let grasp_inv = grasp.inverse();
    ee_poses
        .iter()
        .map(|ee| {
            let motion = ee.compose(&grasp_inv);
            points0
                .iter()
                .zip(&mask)
                .map(|(p, g)| if *g { motion.transform_point(p) } else { *p })
                .collect()
        })
        .collect()
}
