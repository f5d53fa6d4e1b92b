//! JSON scene descriptions: camera, robot chain and grasp candidates.

use std::path::Path;

use objflow_core::kinematics::{RevoluteJoint, RobotModel};
use objflow_core::trajopt::GraspCandidate;
use objflow_core::{CameraModel, RigidTransform, Vec3};
use serde::{Deserialize, Serialize};

use super::{read_json_file, write_json, FormatError};

/// Quaternions must be unit length to this tolerance.
const QUATERNION_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub translation: [f64; 3],
    pub quaternion_wxyz: [f64; 4],
}

impl PoseJson {
    pub fn to_transform(&self) -> objflow_core::Result<RigidTransform> {
        let [x, y, z] = self.translation;
        RigidTransform::from_quaternion_wxyz(self.quaternion_wxyz, Vec3::new(x, y, z), QUATERNION_TOL)
    }

    pub fn identity() -> Self {
        Self { translation: [0.0; 3], quaternion_wxyz: [1.0, 0.0, 0.0, 0.0] }
    }
}

impl From<&RigidTransform> for PoseJson {
    fn from(tf: &RigidTransform) -> Self {
        let t = tf.translation();
        Self { translation: [t.x, t.y, t.z], quaternion_wxyz: tf.quaternion_wxyz() }
    }
}

impl Default for PoseJson {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera pose in the robot frame.
    pub extrinsics: PoseJson,
}

impl CameraJson {
    pub fn to_model(&self) -> objflow_core::Result<CameraModel> {
        CameraModel::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height, self.extrinsics.to_transform()?)
    }
}

impl From<&CameraModel> for CameraJson {
    fn from(c: &CameraModel) -> Self {
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            extrinsics: (&c.extrinsics).into(),
        }
    }
}

fn invalid(path: &Path) -> impl Fn(objflow_core::Error) -> FormatError + '_ {
    move |e| FormatError::invalid(path, e.to_string())
}

pub fn read_camera(path: &Path) -> Result<CameraModel, FormatError> {
    read_json_file::<CameraJson>(path)?.to_model().map_err(invalid(path))
}

pub fn write_camera(path: &Path, camera: &CameraModel) -> Result<(), FormatError> {
    write_json(path, &CameraJson::from(camera))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointJson {
    pub axis: [f64; 3],
    pub origin: PoseJson,
    pub limits: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotJson {
    pub joints: Vec<JointJson>,
    pub ee_offset: PoseJson,
}

impl RobotJson {
    pub fn to_model(&self) -> objflow_core::Result<RobotModel> {
        let joints = self
            .joints
            .iter()
            .map(|j| {
                Ok(RevoluteJoint {
                    axis: Vec3::from(j.axis),
                    origin: j.origin.to_transform()?,
                    lower: j.limits[0],
                    upper: j.limits[1],
                })
            })
            .collect::<objflow_core::Result<Vec<_>>>()?;
        RobotModel::new(joints, self.ee_offset.to_transform()?)
    }
}

impl From<&RobotModel> for RobotJson {
    fn from(m: &RobotModel) -> Self {
        Self {
            joints: m
                .joints()
                .iter()
                .map(|j| JointJson {
                    axis: j.axis.into(),
                    origin: (&j.origin).into(),
                    limits: [j.lower, j.upper],
                })
                .collect(),
            ee_offset: m.ee_offset().into(),
        }
    }
}

pub fn read_robot(path: &Path) -> Result<RobotModel, FormatError> {
    read_json_file::<RobotJson>(path)?.to_model().map_err(invalid(path))
}

pub fn write_robot(path: &Path, model: &RobotModel) -> Result<(), FormatError> {
    write_json(path, &RobotJson::from(model))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspJson {
    pub pose: PoseJson,
    #[serde(default)]
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspsJson {
    pub candidates: Vec<GraspJson>,
}

pub fn read_grasps(path: &Path) -> Result<Vec<GraspCandidate>, FormatError> {
    let file: GraspsJson = read_json_file(path)?;
    file.candidates
        .iter()
        .map(|g| Ok(GraspCandidate { pose: g.pose.to_transform()?, score: g.score }))
        .collect::<objflow_core::Result<Vec<_>>>()
        .map_err(invalid(path))
}

pub fn write_grasps(path: &Path, grasps: &[GraspCandidate]) -> Result<(), FormatError> {
    let file = GraspsJson {
        candidates: grasps.iter().map(|g| GraspJson { pose: (&g.pose).into(), score: g.score }).collect(),
    };
    write_json(path, &file)
}
