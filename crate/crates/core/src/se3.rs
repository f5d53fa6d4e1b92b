//! Rigid transforms, pinhole cameras and weighted rigid registration.

use alloc::vec::Vec;
use core::ops::{Deref, Mul};

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector2, Vector3, SVD};
use num_traits::Float;

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on `RᵀR = I` and `det R = 1` accepted by [`RigidTransform::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Proper rigid motion `p ↦ R·p + t` (meters).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a transform after checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform("rotation is not orthonormal"));
        }
        if (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform("rotation determinant is not +1"));
        }
        Ok(Self { rotation, translation })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized),
    /// followed by `translation`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = if axis.norm() == 0.0 {
            Matrix3::identity()
        } else {
            *Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).matrix()
        };
        Self { rotation, translation }
    }

    /// Rotation from a scaled-axis (rotation) vector.
    pub fn from_scaled_axis(omega: &Vec3, translation: Vec3) -> Self {
        Self {
            rotation: *Rotation3::new(*omega).matrix(),
            translation,
        }
    }

    pub fn rotation_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle, Vec3::zeros())
    }

    /// Builds a transform from a `[w, x, y, z]` quaternion whose norm must be
    /// within `tol` of 1.
    pub fn from_quaternion_wxyz(q: [f64; 4], translation: Vec3, tol: f64) -> Result<Self> {
        if q.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry"));
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > tol {
            return Err(Error::InvalidTransform("quaternion is not unit norm"));
        }
        let quat = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        Ok(Self {
            rotation: *quat.to_rotation_matrix().matrix(),
            translation,
        })
    }

    /// Unit quaternion `[w, x, y, z]` with `w ≥ 0`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.unit_quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    pub fn unit_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn apply(&self, points: &PointSet3) -> PointSet3 {
        PointSet3(points.iter().map(|p| self.transform_point(p)).collect())
    }

    /// Geodesic angle between the two orientations, radians in `[0, π]`.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        rotation_log(&(self.rotation.transpose() * other.rotation)).norm()
    }

    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Re-orthonormalizes the rotation (polar projection via quaternion).
    pub fn renormalized(&self) -> RigidTransform {
        RigidTransform {
            rotation: *self.unit_quaternion().to_rotation_matrix().matrix(),
            translation: self.translation,
        }
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

/// Logarithm of a rotation matrix as a rotation vector (axis · angle).
///
/// Goes through the quaternion so it stays accurate near 0 and near π.
pub fn rotation_log(r: &Matrix3<f64>) -> Vec3 {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let (mut w, mut v) = (q.w, q.imag());
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let n = v.norm();
    if n < 1e-12 {
        return v * 2.0;
    }
    v * (2.0 * Float::atan2(n, w) / n)
}

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of the right Jacobian of SO(3) at rotation vector `phi`.
pub fn so3_right_jacobian_inv(phi: &Vec3) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < 1e-6 {
        return Matrix3::identity() + k * 0.5 + k * k * (1.0 / 12.0);
    }
    let (s, c) = Float::sin_cos(theta);
    let coeff = 1.0 / (theta * theta) - (1.0 + c) / (2.0 * theta * s);
    Matrix3::identity() + k * 0.5 + k * k * coeff
}

/// Points in meters. All coordinates finite.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet3(Vec<Vec3>);

impl PointSet3 {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("point set contains non-finite coordinates".into()));
        }
        Ok(Self(points))
    }

    pub fn into_inner(self) -> Vec<Vec3> {
        self.0
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.0.is_empty() {
            return None;
        }
        Some(self.0.iter().sum::<Vec3>() / self.0.len() as f64)
    }
}

impl Deref for PointSet3 {
    type Target = [Vec3];

    fn deref(&self) -> &[Vec3] {
        &self.0
    }
}

/// Pinhole intrinsics plus camera→robot extrinsics.
///
/// The image plane spans `[0, width) × [0, height)` in pixel units.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsics: RigidTransform,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        extrinsics: RigidTransform,
    ) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, width, height, extrinsics };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive"));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(Error::InvalidCamera("cx must lie strictly inside the image"));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidCamera("cy must lie strictly inside the image"));
        }
        Ok(())
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }

    /// Lifts a pixel with metric depth into the robot frame.
    pub fn backproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vec3> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidDepth(depth));
        }
        if !self.contains(pixel) {
            return Err(Error::OutOfBounds {
                u: pixel.x,
                v: pixel.y,
                width: self.width,
                height: self.height,
            });
        }
        let cam = Vec3::new(
            depth * (pixel.x - self.cx) / self.fx,
            depth * (pixel.y - self.cy) / self.fy,
            depth,
        );
        Ok(self.extrinsics.transform_point(&cam))
    }

    /// Projects a robot-frame point; `None` when it sits at or behind the
    /// camera plane.
    pub fn project(&self, point: &Vec3) -> Option<(Vector2<f64>, f64)> {
        let cam = self.extrinsics.inverse().transform_point(point);
        if cam.z <= 0.0 {
            return None;
        }
        let pixel = Vector2::new(
            self.fx * cam.x / cam.z + self.cx,
            self.fy * cam.y / cam.z + self.cy,
        );
        Some((pixel, cam.z))
    }
}

/// Relative tolerance on the second singular value of the cross-covariance
/// below which a fit is declared degenerate.
const RANK_TOL: f64 = 1e-10;

/// Weighted least-squares rigid registration `argmin Σ wᵢ‖R·srcᵢ + t − dstᵢ‖²`.
///
/// Non-finite or non-positive weights are ignored. Reflections are removed by
/// flipping the singular vector with the smallest singular value.
pub fn fit_rigid(src: &[Vec3], dst: &[Vec3], weights: &[f64]) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "fit_rigid length mismatch: src {}, dst {}, weights {}",
            src.len(),
            dst.len(),
            weights.len()
        )));
    }
    let used = || {
        src.iter()
            .zip(dst)
            .zip(weights)
            .filter(|(_, w)| w.is_finite() && **w > 0.0)
            .map(|((s, d), w)| (s, d, *w))
    };
    let count = used().count();
    if count < 3 {
        return Err(Error::DegenerateCorrespondence(count));
    }
    let total: f64 = used().map(|(_, _, w)| w).sum();
    let c_src = used().map(|(s, _, w)| s * w).sum::<Vec3>() / total;
    let c_dst = used().map(|(_, d, w)| d * w).sum::<Vec3>() / total;

    let mut cov = Matrix3::zeros();
    for (s, d, w) in used() {
        cov += (s - c_src) * (d - c_dst).transpose() * w;
    }
    let svd = SVD::new(cov, true, true);
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| sv[*b].partial_cmp(&sv[*a]).unwrap_or(core::cmp::Ordering::Equal));
    if !(sv[order[0]] > 0.0) || sv[order[1]] <= RANK_TOL * sv[order[0]] {
        return Err(Error::DegenerateGeometry);
    }
    let u = svd.u.ok_or(Error::DegenerateGeometry)?;
    let v = svd.v_t.ok_or(Error::DegenerateGeometry)?.transpose();
    let mut flip = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        flip[(order[2], order[2])] = -1.0;
    }
    let rotation = v * flip * u.transpose();
    let translation = c_dst - rotation * c_src;
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}

/// [`fit_rigid`] with 0/1 weights from a visibility mask.
pub fn fit_rigid_visible(src: &[Vec3], dst: &[Vec3], visible: &[bool]) -> Result<RigidTransform> {
    let w: Vec<f64> = visible.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
    fit_rigid(src, dst, &w)
}

/// Weighted sum of squared residuals of `tf` on the correspondences.
pub fn weighted_residual(tf: &RigidTransform, src: &[Vec3], dst: &[Vec3], weights: &[f64]) -> f64 {
    src.iter()
        .zip(dst)
        .zip(weights)
        .filter(|(_, w)| w.is_finite() && **w > 0.0)
        .map(|((s, d), w)| w * (tf.transform_point(s) - d).norm_squared())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    fn cam(extrinsics: RigidTransform) -> CameraModel {
        CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480, extrinsics).unwrap()
    }

    #[test]
    fn principal_ray_backprojects_onto_optical_axis() {
        let c = cam(RigidTransform::identity());
        let p = c.backproject(&Vector2::new(320.0, 240.0), 2.0).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn one_focal_length_offset_gives_unit_slope() {
        let c = CameraModel::new(100.0, 100.0, 50.0, 50.0, 400, 400, RigidTransform::identity()).unwrap();
        let p = c.backproject(&Vector2::new(150.0, 50.0), 1.0).unwrap();
        assert!((p - Vec3::new(1.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn backproject_with_extrinsics_matches_hand_composition() {
        // Oracle: pinhole lift then R_z(90°)·p + (0.1, 0, 0), written out by hand.
        let ext = RigidTransform::from_axis_angle(&Vec3::z(), FRAC_PI_2, Vec3::new(0.1, 0.0, 0.0));
        let c = CameraModel::new(525.0, 520.0, 319.5, 239.5, 640, 480, ext).unwrap();
        let p = c.backproject(&Vector2::new(320.0, 240.0), 1.5).unwrap();
        let xc = 1.5 * (320.0 - 319.5) / 525.0;
        let yc = 1.5 * (240.0 - 239.5) / 520.0;
        let expected = Vec3::new(-yc + 0.1, xc, 1.5);
        assert!((p - expected).norm() < 1e-12, "{p:?} vs {expected:?}");
    }

    #[test]
    fn backproject_rejects_bad_depth_and_pixels() {
        let c = cam(RigidTransform::identity());
        assert!(matches!(c.backproject(&Vector2::new(10.0, 10.0), 0.0), Err(Error::InvalidDepth(_))));
        assert!(matches!(c.backproject(&Vector2::new(10.0, 10.0), f64::NAN), Err(Error::InvalidDepth(_))));
        assert!(matches!(
            c.backproject(&Vector2::new(-3.0, 10.0), 1.0),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            c.backproject(&Vector2::new(640.0, 10.0), 1.0),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn camera_validation() {
        let id = RigidTransform::identity();
        assert!(CameraModel::new(0.0, 1.0, 1.0, 1.0, 4, 4, id).is_err());
        assert!(CameraModel::new(1.0, 1.0, 4.0, 1.0, 4, 4, id).is_err());
        assert!(CameraModel::new(1.0, 1.0, 1.0, 0.0, 4, 4, id).is_err());
    }

    #[test]
    fn group_laws() {
        let a = RigidTransform::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7, Vec3::new(0.1, -0.2, 0.3));
        let x = RigidTransform::from_axis_angle(&Vec3::new(-1.0, 0.5, 0.0), 1.9, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(RigidTransform::identity().compose(&x), x);
        let e = a.compose(&a.inverse());
        assert!((e.rotation() - Matrix3::identity()).abs().max() < 1e-9);
        assert!(e.translation().norm() < 1e-9);

        let inv = RigidTransform::rotation_z(0.4).inverse();
        let expected = RigidTransform::rotation_z(-0.4);
        assert!((inv.rotation() - expected.rotation()).abs().max() < 1e-15);
    }

    #[test]
    fn apply_translation_shifts_every_row() {
        let pts = PointSet3::new(alloc::vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.0, 0.5)]).unwrap();
        let t = Vec3::new(0.3, -0.1, 0.2);
        let moved = RigidTransform::from_translation(t).apply(&pts);
        for (a, b) in pts.iter().zip(moved.iter()) {
            assert_eq!(a + t, *b);
        }
    }

    #[test]
    fn new_rejects_improper_rotation() {
        let mut m = Matrix3::identity();
        m[(2, 2)] = -1.0;
        assert!(RigidTransform::new(m, Vec3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity() * 1.01, Vec3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity(), Vec3::zeros()).is_ok());
    }

    #[test]
    fn quaternion_roundtrip_and_norm_check() {
        let a = RigidTransform::from_axis_angle(&Vec3::new(0.3, -0.2, 0.9), 2.5, Vec3::new(1.0, 2.0, 3.0));
        let q = a.quaternion_wxyz();
        let b = RigidTransform::from_quaternion_wxyz(q, *a.translation(), 1e-6).unwrap();
        assert!((a.rotation() - b.rotation()).abs().max() < 1e-12);
        assert!(RigidTransform::from_quaternion_wxyz([1.1, 0.0, 0.0, 0.0], Vec3::zeros(), 1e-6).is_err());
    }

    #[test]
    fn rotation_log_near_pi() {
        let axis = Vec3::new(1.0, 1.0, 0.0).normalize();
        for angle in [1e-9, 0.5, 3.0, core::f64::consts::PI - 1e-9] {
            let r = RigidTransform::from_axis_angle(&axis, angle, Vec3::zeros());
            let phi = rotation_log(r.rotation());
            assert!((phi.norm() - angle).abs() < 1e-8, "{angle}");
        }
    }

    #[test]
    fn fit_rigid_identity_and_translation() {
        let src = alloc::vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let w = [1.0; 4];
        let tf = fit_rigid(&src, &src, &w).unwrap();
        assert!((tf.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(tf.translation().norm() < 1e-12);

        let shift = Vec3::new(0.3, 0.0, 0.0);
        let dst: Vec<_> = src.iter().map(|p| p + shift).collect();
        let tf = fit_rigid(&src, &dst, &w).unwrap();
        assert!((tf.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert!((tf.translation() - shift).norm() < 1e-12);
    }

    #[test]
    fn fit_rigid_degenerate_inputs() {
        let line: Vec<_> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert_eq!(fit_rigid(&line, &line, &[1.0; 5]), Err(Error::DegenerateGeometry));
        let pts: Vec<_> = (0..4).map(|i| Vec3::new(i as f64, (i * i) as f64, 1.0)).collect();
        assert_eq!(
            fit_rigid(&pts, &pts, &[1.0, 1.0, 0.0, 0.0]),
            Err(Error::DegenerateCorrespondence(2))
        );
        assert!(matches!(fit_rigid(&pts, &pts[..3], &[1.0; 4]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn fit_rigid_planar_mirror_input_keeps_proper_rotation() {
        // Coplanar points mirrored through their own plane: the best proper
        // rotation is the identity, not the reflection.
        let src = alloc::vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let dst: Vec<_> = src.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
        let tf = fit_rigid(&src, &dst, &[1.0; 4]).unwrap();
        assert!((tf.rotation().determinant() - 1.0).abs() < 1e-9);
    }
}
