use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix};
use num_traits::Float;

use super::CostWeights;
use crate::depthflow::ObjectFlow3D;
use crate::kinematics::RobotModel;
use crate::se3::{rotation_log, skew, so3_right_jacobian_inv, RigidTransform, Vec3};
use crate::{Error, Result};

/// Uniform time warp of a `timesteps`-long flow onto `horizon` steps
/// (nearest-index rounding).
pub fn time_warp_indices(timesteps: usize, horizon: usize) -> Vec<usize> {
    if horizon <= 1 || timesteps <= 1 {
        return vec![0; horizon];
    }
    let scale = (timesteps - 1) as f64 / (horizon - 1) as f64;
    (0..horizon)
        .map(|t| (Float::round(t as f64 * scale) as usize).min(timesteps - 1))
        .collect()
}

/// Per-term cost totals over the whole trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    /// Unweighted `Σ_t Σ_i ‖x̂_i^t − P̃_t[i]‖²` over visible targets (m²).
    pub task: f64,
    /// Unweighted joint-limit hinge (rad²).
    pub reachability: f64,
    /// Unweighted consecutive-pose differences (m² + rad²).
    pub smoothness: f64,
    /// `Σ_t −manipulability(q_t)`.
    pub manipulability: f64,
    /// Weighted sum of the four terms.
    pub total: f64,
}

/// Flow-tracking objective over a stacked joint trajectory.
///
/// Total cost is `w_f·task + w_r·reach + w_s·smooth + w_m·manip`. All terms
/// but manipulability are sums of squared residuals, which is what the
/// Levenberg–Marquardt solver exploits.
#[derive(Clone, Debug)]
pub struct TrackingProblem<'a> {
    model: &'a RobotModel,
    weights: CostWeights,
    horizon: usize,
    /// Per step: (grasped point in the grasp frame, flow target).
    tracked: Vec<Vec<(Vec3, Vec3)>>,
    /// Task cost of non-grasped points, which never move.
    static_task: f64,
}

/// One step's kinematic quantities.
struct StepKin {
    ee: RigidTransform,
    jv: DMatrix<f64>,
    jw: DMatrix<f64>,
}

/// Block-tridiagonal Gauss–Newton system: `diag[t]` couples `q_t` with
/// itself, `lower[t]` couples `q_t` with `q_{t−1}` (unused at `t = 0`), and
/// `rhs[t]` is the half gradient.
pub(super) struct NormalEquations {
    pub diag: Vec<DMatrix<f64>>,
    pub lower: Vec<DMatrix<f64>>,
    pub rhs: Vec<DVector<f64>>,
}

impl<'a> TrackingProblem<'a> {
    /// Targets come from `flow` time-warped onto `horizon` steps. Grasped
    /// points are anchored by their first-frame position; grasped points not
    /// visible in the first frame are dropped.
    pub fn new(
        model: &'a RobotModel,
        flow: &ObjectFlow3D,
        grasp: &RigidTransform,
        grasped: &[usize],
        weights: CostWeights,
        horizon: usize,
    ) -> Result<Self> {
        weights.validate()?;
        if horizon < 2 {
            return Err(Error::InvalidInput("horizon must be at least 2".into()));
        }
        if grasped.is_empty() {
            return Err(Error::InvalidInput("grasped point set is empty".into()));
        }
        if let Some(bad) = grasped.iter().find(|i| **i >= flow.points()) {
            return Err(Error::InvalidInput(alloc::format!("grasped index {bad} out of range")));
        }
        if flow.timesteps() == 0 || flow.empty_timesteps().len() == flow.timesteps() {
            return Err(Error::NoTarget);
        }
        let mut is_grasped = vec![false; flow.points()];
        for &i in grasped {
            is_grasped[i] = true;
        }
        if !grasped.iter().any(|&i| flow.visible(0, i)) {
            return Err(Error::InvalidInput("no grasped point is visible in the first frame".into()));
        }
        let grasp_inv = grasp.inverse();
        let warp = time_warp_indices(flow.timesteps(), horizon);
        let mut tracked = Vec::with_capacity(horizon);
        let mut static_task = 0.0;
        for &src in &warp {
            let mut step = Vec::new();
            for (i, &grasped) in is_grasped.iter().enumerate() {
                let (Some(p0), Some(target)) = (flow.position(0, i), flow.position(src, i)) else {
                    continue;
                };
                if grasped {
                    step.push((grasp_inv.transform_point(&p0), target));
                } else {
                    static_task += (p0 - target).norm_squared();
                }
            }
            tracked.push(step);
        }
        if tracked.iter().all(|s| s.is_empty()) {
            return Err(Error::NoTarget);
        }
        Ok(Self {
            model,
            weights,
            horizon,
            tracked,
            static_task,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dof(&self) -> usize {
        self.model.dof()
    }

    pub fn model(&self) -> &RobotModel {
        self.model
    }

    pub fn weights(&self) -> CostWeights {
        self.weights
    }

    fn kin(&self, q: &DVector<f64>) -> StepKin {
        let (ee, jac) = self.model.fk_with_jacobian(q.as_slice());
        StepKin {
            ee,
            jv: jac.rows(0, 3).into_owned(),
            jw: jac.rows(3, 3).into_owned(),
        }
    }

    /// Predicted grasped-point positions at step `t` for end-effector `ee`.
    pub fn step_residual_norm2(&self, t: usize, ee: &RigidTransform) -> f64 {
        self.tracked[t]
            .iter()
            .map(|(b, target)| (ee.transform_point(b) - target).norm_squared())
            .sum()
    }

    pub fn evaluate(&self, traj: &[DVector<f64>]) -> CostBreakdown {
        assert_eq!(traj.len(), self.horizon);
        let mut c = CostBreakdown {
            task: self.static_task,
            ..CostBreakdown::default()
        };
        let mut prev: Option<RigidTransform> = None;
        for (t, q) in traj.iter().enumerate() {
            let ee = self.model.fk(q.as_slice());
            c.task += self.step_residual_norm2(t, &ee);
            c.reachability += self.model.reachability_cost(q.as_slice());
            c.manipulability -= self.model.manipulability(q.as_slice());
            if let Some(p) = prev {
                c.smoothness += p.translation_distance(&ee).powi(2) + p.rotation_angle_to(&ee).powi(2);
            }
            prev = Some(ee);
        }
        let w = self.weights;
        c.total = w.task * c.task + w.reach * c.reachability + w.smooth * c.smoothness + w.manip * c.manipulability;
        c
    }

    /// Analytic gradient of the total cost, stacked step-major.
    pub fn gradient(&self, traj: &[DVector<f64>]) -> DVector<f64> {
        let ne = self.normal_equations(traj);
        let d = self.dof();
        let mut g = DVector::zeros(self.horizon * d);
        for (t, r) in ne.rhs.iter().enumerate() {
            g.rows_mut(t * d, d).copy_from(&(r * 2.0));
        }
        g
    }

    pub(super) fn normal_equations(&self, traj: &[DVector<f64>]) -> NormalEquations {
        assert_eq!(traj.len(), self.horizon);
        let d = self.dof();
        let w = self.weights;
        let (sf, sr, ss) = (Float::sqrt(w.task), Float::sqrt(w.reach), Float::sqrt(w.smooth));
        let kin: Vec<StepKin> = traj.iter().map(|q| self.kin(q)).collect();
        let mut diag = vec![DMatrix::zeros(d, d); self.horizon];
        let mut lower = vec![DMatrix::zeros(d, d); self.horizon];
        let mut rhs = vec![DVector::zeros(d); self.horizon];

        for (t, k) in kin.iter().enumerate() {
            let pe = *k.ee.translation();
            for (b, target) in &self.tracked[t] {
                let p = k.ee.transform_point(b);
                let a = (&k.jv - skew(&(p - pe)) * &k.jw) * sf;
                let r = (p - target) * sf;
                diag[t] += a.transpose() * &a;
                rhs[t] += a.transpose() * r;
            }
            for (j, joint) in self.model.joints().iter().enumerate() {
                let q = traj[t][j];
                let (r, dr) = if q > joint.upper {
                    (sr * (q - joint.upper), sr)
                } else if q < joint.lower {
                    (sr * (joint.lower - q), -sr)
                } else {
                    continue;
                };
                diag[t][(j, j)] += dr * dr;
                rhs[t][j] += dr * r;
            }
            if w.manip != 0.0 {
                rhs[t] -= self.model.manipulability_gradient(traj[t].as_slice()) * (0.5 * w.manip);
            }
            if t == 0 {
                continue;
            }
            let kp = &kin[t - 1];
            let r_pos = (k.ee.translation() - kp.ee.translation()) * ss;
            let a_cur = &k.jv * ss;
            let a_prev = &kp.jv * -ss;
            accumulate_pair(&mut diag, &mut lower, &mut rhs, t, &a_cur, &a_prev, &r_pos);

            let phi = rotation_log(&(kp.ee.rotation().transpose() * k.ee.rotation()));
            let map: Matrix3<f64> = so3_right_jacobian_inv(&phi) * k.ee.rotation().transpose();
            let map = DMatrix::from_column_slice(3, 3, map.as_slice());
            let a_cur = (&map * ss) * &k.jw;
            let a_prev = (&map * -ss) * &kp.jw;
            accumulate_pair(&mut diag, &mut lower, &mut rhs, t, &a_cur, &a_prev, &(phi * ss));
        }
        NormalEquations { diag, lower, rhs }
    }
}

fn accumulate_pair(
    diag: &mut [DMatrix<f64>],
    lower: &mut [DMatrix<f64>],
    rhs: &mut [DVector<f64>],
    t: usize,
    a_cur: &DMatrix<f64>,
    a_prev: &DMatrix<f64>,
    r: &SMatrix<f64, 3, 1>,
) {
    diag[t] += a_cur.transpose() * a_cur;
    diag[t - 1] += a_prev.transpose() * a_prev;
    lower[t] += a_cur.transpose() * a_prev;
    rhs[t] += a_cur.transpose() * r;
    rhs[t - 1] += a_prev.transpose() * r;
}
