//! Serial revolute chains: forward kinematics, geometric Jacobian, damped
//! least-squares IK, Yoshikawa manipulability and joint-limit penalties.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Vector6};
use num_traits::Float;

use crate::se3::{rotation_log, RigidTransform, Vec3};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RevoluteJoint {
    /// Rotation axis in the joint frame, unit norm.
    pub axis: Vec3,
    /// Joint frame relative to the previous joint's rotated frame.
    pub origin: RigidTransform,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    joints: Vec<RevoluteJoint>,
    ee_offset: RigidTransform,
}

/// Time-indexed joint configurations.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTrajectory {
    pub configurations: Vec<DVector<f64>>,
    /// Seconds per step.
    pub dt: f64,
}

/// World-frame quantities of one joint at a configuration.
#[derive(Clone, Copy, Debug)]
struct JointFrame {
    axis: Vec3,
    position: Vec3,
}

impl RobotModel {
    pub fn new(joints: Vec<RevoluteJoint>, ee_offset: RigidTransform) -> Result<Self> {
        for (k, j) in joints.iter().enumerate() {
            if !((j.axis.norm() - 1.0).abs() <= 1e-9) {
                return Err(Error::InvalidInput(format!("joint {k} axis is not unit norm")));
            }
            if !(j.lower < j.upper) {
                return Err(Error::InvalidInput(format!("joint {k} lower limit is not below upper")));
            }
        }
        Ok(Self { joints, ee_offset })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[RevoluteJoint] {
        &self.joints
    }

    pub fn ee_offset(&self) -> &RigidTransform {
        &self.ee_offset
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.lower))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.upper))
    }

    pub fn mid_configuration(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| 0.5 * (j.lower + j.upper)))
    }

    /// Same robot mounted on a fixed base transform.
    pub fn with_base(&self, base: &RigidTransform) -> RobotModel {
        let mut out = self.clone();
        match out.joints.first_mut() {
            Some(first) => first.origin = base.compose(&first.origin),
            None => out.ee_offset = base.compose(&out.ee_offset),
        }
        out
    }

    /// End-effector pose in the robot frame.
    pub fn fk(&self, q: &[f64]) -> RigidTransform {
        self.check_len(q);
        let mut tf = RigidTransform::identity();
        for (joint, angle) in self.joints.iter().zip(q) {
            tf = tf
                .compose(&joint.origin)
                .compose(&RigidTransform::from_axis_angle(&joint.axis, *angle, Vec3::zeros()));
        }
        tf.compose(&self.ee_offset)
    }

    fn frames(&self, q: &[f64]) -> (Vec<JointFrame>, RigidTransform) {
        self.check_len(q);
        let mut tf = RigidTransform::identity();
        let mut frames = Vec::with_capacity(self.dof());
        for (joint, angle) in self.joints.iter().zip(q) {
            tf = tf.compose(&joint.origin);
            frames.push(JointFrame {
                axis: tf.transform_vector(&joint.axis),
                position: *tf.translation(),
            });
            tf = tf.compose(&RigidTransform::from_axis_angle(&joint.axis, *angle, Vec3::zeros()));
        }
        (frames, tf.compose(&self.ee_offset))
    }

    /// End-effector pose together with its 6×DOF geometric Jacobian.
    pub fn fk_with_jacobian(&self, q: &[f64]) -> (RigidTransform, DMatrix<f64>) {
        let (frames, ee) = self.frames(q);
        let p_e = *ee.translation();
        let mut jac = DMatrix::zeros(6, self.dof());
        for (k, f) in frames.iter().enumerate() {
            let lin = f.axis.cross(&(p_e - f.position));
            jac.fixed_view_mut::<3, 1>(0, k).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, k).copy_from(&f.axis);
        }
        (ee, jac)
    }

    /// Geometric Jacobian: linear velocity of the end-effector origin on top
    /// (m/rad), angular velocity below (rad/rad), both in the robot frame.
    pub fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        self.fk_with_jacobian(q).1
    }

    /// Yoshikawa measure `sqrt(det(J·Jᵀ))` of the full 6×DOF Jacobian.
    pub fn manipulability(&self, q: &[f64]) -> f64 {
        yoshikawa(&self.jacobian(q))
    }

    /// Analytic gradient of [`RobotModel::manipulability`]. Zero where the
    /// measure vanishes (rank-deficient Jacobian).
    pub fn manipulability_gradient(&self, q: &[f64]) -> DVector<f64> {
        let n = self.dof();
        let mut grad = DVector::zeros(n);
        if n < 6 {
            return grad;
        }
        let (frames, ee) = self.frames(q);
        let p_e = *ee.translation();
        let mut jac = DMatrix::zeros(6, n);
        for (k, f) in frames.iter().enumerate() {
            jac.fixed_view_mut::<3, 1>(0, k).copy_from(&f.axis.cross(&(p_e - f.position)));
            jac.fixed_view_mut::<3, 1>(3, k).copy_from(&f.axis);
        }
        let a = &jac * jac.transpose();
        let det = a.determinant();
        if !(det > 1e-24) {
            return grad;
        }
        let m = Float::sqrt(det);
        let Some(chol) = a.cholesky() else {
            return grad;
        };
        // dm/dq_k = m · <A⁻¹J, ∂J/∂q_k>_F
        let weights = chol.solve(&jac);
        for (k, fk) in frames.iter().enumerate() {
            let mut acc = 0.0;
            for (i, fi) in frames.iter().enumerate() {
                let (d_lin, d_ang) = if k < i {
                    let dz = fk.axis.cross(&fi.axis);
                    let r = p_e - fi.position;
                    (dz.cross(&r) + fi.axis.cross(&fk.axis.cross(&r)), dz)
                } else {
                    let dpe = fk.axis.cross(&(p_e - fk.position));
                    (fi.axis.cross(&dpe), Vec3::zeros())
                };
                for r in 0..3 {
                    acc += weights[(r, i)] * d_lin[r] + weights[(r + 3, i)] * d_ang[r];
                }
            }
            grad[k] = m * acc;
        }
        grad
    }

    /// `Σ max(q−upper, 0)² + max(lower−q, 0)²`.
    pub fn reachability_cost(&self, q: &[f64]) -> f64 {
        self.check_len(q);
        self.joints
            .iter()
            .zip(q)
            .map(|(j, v)| {
                let over = (v - j.upper).max(0.0) + (j.lower - v).max(0.0);
                over * over
            })
            .sum()
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter().zip(&self.joints).all(|(v, j)| *v >= j.lower && *v <= j.upper)
    }

    /// Damped least-squares inverse kinematics with per-iterate limit
    /// clamping. Never fails: a non-converged solve returns the best iterate.
    pub fn ik_dls(&self, target: &RigidTransform, q0: &[f64], params: &IkParams) -> IkSolution {
        let mut q = DVector::from_column_slice(q0);
        self.clamp(q.as_mut_slice());
        let mut best = IkSolution {
            q: q.clone(),
            converged: false,
            iterations: 0,
            position_error: f64::INFINITY,
            rotation_error: f64::INFINITY,
        };
        let damping2 = params.damping * params.damping;
        for iter in 0..=params.max_iterations {
            let (ee, jac) = self.fk_with_jacobian(q.as_slice());
            let err_p = target.translation() - ee.translation();
            let err_r = rotation_log(&(target.rotation() * ee.rotation().transpose()));
            let (pe, re) = (err_p.norm(), err_r.norm());
            if pe + ROTATION_WEIGHT * re < best.position_error + ROTATION_WEIGHT * best.rotation_error {
                best = IkSolution {
                    q: q.clone(),
                    converged: false,
                    iterations: iter,
                    position_error: pe,
                    rotation_error: re,
                };
            }
            if pe < params.position_tolerance && re < params.rotation_tolerance {
                best.converged = true;
                return best;
            }
            if iter == params.max_iterations {
                break;
            }
            let err = Vector6::new(err_p.x, err_p.y, err_p.z, err_r.x, err_r.y, err_r.z);
            let mut a = &jac * jac.transpose();
            for d in 0..6 {
                a[(d, d)] += damping2;
            }
            let Some(chol) = a.cholesky() else { break };
            let mut step = jac.transpose() * chol.solve(&DVector::from_column_slice(err.as_slice()));
            let largest = step.amax();
            if largest > params.max_step {
                step *= params.max_step / largest;
            }
            q += step;
            self.clamp(q.as_mut_slice());
        }
        best
    }

    fn check_len(&self, q: &[f64]) {
        assert_eq!(q.len(), self.dof(), "configuration length does not match robot DOF");
    }

    /// Two revolute joints about z with links along x.
    pub fn planar_two_link(l1: f64, l2: f64) -> RobotModel {
        let joint = |offset: f64| RevoluteJoint {
            axis: Vec3::z(),
            origin: RigidTransform::from_translation(Vec3::new(offset, 0.0, 0.0)),
            lower: -core::f64::consts::PI,
            upper: core::f64::consts::PI,
        };
        RobotModel {
            joints: alloc::vec![joint(0.0), joint(l1)],
            ee_offset: RigidTransform::from_translation(Vec3::new(l2, 0.0, 0.0)),
        }
    }

    /// Illustrative 7-DOF arm with Franka-Panda-like geometry and limits
    /// (modified DH parameters, flange plus hand offset).
    pub fn franka_like() -> RobotModel {
        use core::f64::consts::FRAC_PI_2;
        const A: [f64; 7] = [0.0, 0.0, 0.0, 0.0825, -0.0825, 0.0, 0.088];
        const D: [f64; 7] = [0.333, 0.0, 0.316, 0.0, 0.384, 0.0, 0.0];
        const ALPHA: [f64; 7] = [0.0, -FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, FRAC_PI_2];
        const LIMITS: [(f64, f64); 7] = [
            (-2.8973, 2.8973),
            (-1.7628, 1.7628),
            (-2.8973, 2.8973),
            (-3.0718, -0.0698),
            (-2.8973, 2.8973),
            (-0.0175, 3.7525),
            (-2.8973, 2.8973),
        ];
        let joints = (0..7)
            .map(|k| RevoluteJoint {
                axis: Vec3::z(),
                origin: RigidTransform::from_axis_angle(&Vec3::x(), ALPHA[k], Vec3::zeros())
                    .compose(&RigidTransform::from_translation(Vec3::new(A[k], 0.0, D[k]))),
                lower: LIMITS[k].0,
                upper: LIMITS[k].1,
            })
            .collect();
        let ee_offset = RigidTransform::from_axis_angle(
            &Vec3::z(),
            -core::f64::consts::FRAC_PI_4,
            Vec3::new(0.0, 0.0, 0.107 + 0.1034),
        );
        RobotModel { joints, ee_offset }
    }
}

/// Meters per radian used to rank IK iterates by combined pose error.
const ROTATION_WEIGHT: f64 = 0.1;

/// Yoshikawa manipulability of an arbitrary Jacobian; zero when it has more
/// rows than columns.
pub fn yoshikawa(jac: &DMatrix<f64>) -> f64 {
    if jac.nrows() > jac.ncols() {
        return 0.0;
    }
    let det = (jac * jac.transpose()).determinant();
    if det > 0.0 {
        Float::sqrt(det)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkParams {
    pub damping: f64,
    pub max_iterations: usize,
    /// Meters.
    pub position_tolerance: f64,
    /// Radians.
    pub rotation_tolerance: f64,
    /// Largest per-iteration joint change, radians.
    pub max_step: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_iterations: 200,
            position_tolerance: 1e-4,
            rotation_tolerance: 1e-3,
            max_step: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkSolution {
    pub q: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub position_error: f64,
    pub rotation_error: f64,
}
