//! Synthetic scenes rendered into flow bundles: an object carried by the
//! arm, a pushed T-block and a swinging door. Depth is ray-cast against a
//! background plane, object points are z-buffered into their nearest pixel,
//! and the predicted depth is the true depth under a known inverse
//! scale-shift.

use std::path::{Path, PathBuf};

use nalgebra::{DVector, Matrix3, Vector2};
use objflow_core::depthflow::{DepthMap, FlowBundle, Mask, ScaleShift, Tracks2D};
use objflow_core::door::DoorGeometry;
use objflow_core::kinematics::{IkParams, RobotModel};
use objflow_core::push::{straight_flow, Pose2, TBlockShape};
use objflow_core::rng::{stage_rng, Stage};
use objflow_core::trajopt::{rigid_grasp_rollout, GraspCandidate};
use objflow_core::{CameraModel, RigidTransform, Vec3};
use rand::Rng;

use crate::config::{
    CalibrationConfig, DoorConfig, MovableConfig, PipelineConfig, PlannerConfig, PushConfig, TrajoptConfig,
    SCHEMA_VERSION,
};
use crate::error::CliError;
use crate::formats::{self, PoseJson};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Scene {
    Grasp,
    Push,
    Door,
}

/// Depth the predicted maps are offset from: `pred = (true - b) / s`.
pub const TRUE_CALIBRATION: ScaleShift = ScaleShift { scale: 0.8, shift: 0.1 };

/// Depth assigned where the background plane is not hit.
const FAR: f64 = 20.0;

/// Points within this distance of the background are hidden by it.
const SURFACE_EPS: f64 = 1e-6;

/// Joint configuration the arm starts from in the grasp scene.
pub const GRASP_Q0: [f64; 7] = [0.1, -0.3, 0.05, -2.0, 0.05, 1.8, 0.7];

pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

/// Scene description before rendering.
pub struct SceneSpec {
    pub camera: CameraModel,
    pub background: Plane,
    /// True robot-frame points per frame.
    pub frames: Vec<Vec<Vec3>>,
}

pub struct SynthScene {
    pub bundle: FlowBundle,
    pub frames: Vec<Vec<Vec3>>,
    pub planner: PlannerConfig,
    pub robot: Option<RobotModel>,
    pub grasps: Vec<GraspCandidate>,
}

/// Camera at `eye` looking at `target`; image rows follow `down`
/// as closely as the view direction allows.
pub fn look_at(eye: Vec3, target: Vec3, down: Vec3) -> RigidTransform {
    let z = (target - eye).normalize();
    let y = (down - z * down.dot(&z)).normalize();
    let x = y.cross(&z);
    RigidTransform::new(Matrix3::from_columns(&[x, y, z]), eye).expect("orthonormal by construction")
}

fn background_depth(camera: &CameraModel, plane: &Plane) -> Vec<f64> {
    let r = camera.extrinsics.rotation();
    let origin = camera.extrinsics.translation();
    let mut out = Vec::with_capacity((camera.width * camera.height) as usize);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let ray = r * Vec3::new((x as f64 - camera.cx) / camera.fx, (y as f64 - camera.cy) / camera.fy, 1.0);
            let denom = plane.normal.dot(&ray);
            let t = if denom.abs() > 1e-12 { plane.normal.dot(&(plane.point - origin)) / denom } else { -1.0 };
            out.push(if t > 0.0 { t } else { FAR });
        }
    }
    out
}

fn nearest_pixel(p: &Vector2<f64>, camera: &CameraModel) -> Option<usize> {
    if !camera.contains(p) {
        return None;
    }
    let x = (p.x.round() as u32).min(camera.width - 1);
    let y = (p.y.round() as u32).min(camera.height - 1);
    Some((y * camera.width + x) as usize)
}

/// Renders tracks, predicted depths, reference depth and the first-frame
/// object mask.
pub fn render(spec: &SceneSpec, calib: ScaleShift) -> FlowBundle {
    let cam = &spec.camera;
    let background = background_depth(cam, &spec.background);
    let n = spec.frames[0].len();
    let (mut pixels, mut visibility, mut depths) = (Vec::new(), Vec::new(), Vec::new());
    let mut ref_depth = None;
    let mut object_mask = Mask::filled(cam.width, cam.height, false);
    for (t, frame) in spec.frames.iter().enumerate() {
        let mut depth = background.clone();
        let projected: Vec<Option<(Vector2<f64>, f64)>> = frame.iter().map(|p| cam.project(p)).collect();
        let mut order: Vec<usize> = (0..n).filter(|&i| projected[i].is_some()).collect();
        order.sort_by(|&a, &b| projected[a].unwrap().1.total_cmp(&projected[b].unwrap().1));
        let mut vis = vec![false; n];
        let mut taken = vec![false; depth.len()];
        for i in order {
            let (px, z) = projected[i].unwrap();
            if let Some(k) = nearest_pixel(&px, cam) {
                if !taken[k] && z < background[k] - SURFACE_EPS {
                    taken[k] = true;
                    depth[k] = z;
                    vis[i] = true;
                    if t == 0 {
                        object_mask.data[k] = true;
                    }
                }
            }
        }
        pixels.extend(projected.iter().map(|p| p.map_or(Vector2::repeat(f64::NAN), |(p, _)| p)));
        visibility.extend(vis);
        if t == 0 {
            ref_depth = Some(DepthMap::new(cam.width, cam.height, depth.iter().map(|d| *d as f32).collect()).unwrap());
        }
        let pred = depth.iter().map(|d| ((d - calib.shift) / calib.scale) as f32).collect();
        depths.push(DepthMap::new(cam.width, cam.height, pred).unwrap());
    }
    FlowBundle {
        tracks: Tracks2D::new(spec.frames.len(), n, pixels, visibility).unwrap(),
        depths,
        ref_depth: ref_depth.expect("at least one frame"),
        object_mask,
        part_masks: None,
        camera: spec.camera.clone(),
    }
}

fn camera(width: u32, height: u32, f: f64, pose: RigidTransform) -> CameraModel {
    CameraModel::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height, pose).unwrap()
}

/// Object carried by the arm along a constant-velocity straight path.
pub fn grasp_scene(timesteps: usize) -> Result<SynthScene, CliError> {
    let model = RobotModel::franka_like();
    let params = IkParams { position_tolerance: 1e-11, rotation_tolerance: 1e-10, max_iterations: 500, ..IkParams::default() };
    let mut q = DVector::from_column_slice(&GRASP_Q0);
    let start = model.fk(q.as_slice());
    let mut ee = Vec::with_capacity(timesteps);
    for t in 0..timesteps {
        let s = t as f64 / (timesteps - 1) as f64;
        let target = RigidTransform::from_translation(Vec3::new(0.12, 0.06, 0.04) * s).compose(&start);
        let sol = model.ik_dls(&target, q.as_slice(), &params);
        if !sol.converged {
            return Err(CliError::Stage { stage: "synth".into(), kind: "ik".into(), message: format!("IK failed at step {t}") });
        }
        q = sol.q;
        ee.push(model.fk(q.as_slice()));
    }
    let grasp = ee[0];
    let mut points = Vec::new();
    for i in 0..5 {
        for j in 0..4 {
            for k in 0..2 {
                let local = Vec3::new(-0.04 + 0.02 * i as f64, -0.03 + 0.02 * j as f64, 0.02 + 0.03 * k as f64);
                points.push(grasp.transform_point(&local));
            }
        }
    }
    let grasped: Vec<usize> = (0..points.len()).collect();
    // A fixture the object never touches.
    points.push(grasp.transform_point(&Vec3::new(0.12, 0.0, 0.05)));
    points.push(grasp.transform_point(&Vec3::new(0.12, 0.05, 0.05)));
    let frames = rigid_grasp_rollout(&grasp, &ee, &points, &grasped);

    let c0 = points[..grasped.len()].iter().sum::<Vec3>() / grasped.len() as f64;
    let target = c0 + Vec3::new(0.06, 0.03, 0.02);
    let low = frames.iter().flatten().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let spec = SceneSpec {
        camera: camera(240, 240, 260.0, look_at(target + Vec3::new(-0.15, 0.0, 0.55), target, -Vec3::x())),
        background: Plane { point: Vec3::new(0.0, 0.0, low - 0.15), normal: Vec3::z() },
        frames,
    };
    let decoy = RigidTransform::from_translation(Vec3::new(0.25, -0.2, 0.0)).compose(&grasp);
    Ok(SynthScene {
        bundle: render(&spec, TRUE_CALIBRATION),
        frames: spec.frames,
        planner: PlannerConfig::Trajopt(TrajoptConfig {
            robot: Some("robot.json".into()),
            grasps: "grasps.json".into(),
            q0: Some(GRASP_Q0.to_vec()),
            grasp_radius: 0.08,
            ..TrajoptConfig::default()
        }),
        robot: Some(model),
        grasps: vec![
            GraspCandidate { pose: grasp, score: 1.0 },
            GraspCandidate { pose: decoy, score: 0.5 },
        ],
    })
}

/// T-block sliding from a seeded start pose to the origin.
pub fn push_scene(seed: u64, timesteps: usize) -> SynthScene {
    let mut rng = stage_rng(seed, Stage::Synthetic);
    let r = rng.random_range(0.08..0.12);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let theta = rng.random_range(-0.5..0.5);
    let start = Pose2::new(r * phi.cos(), r * phi.sin(), theta);
    let template = TBlockShape::default().grid_particles(0.01);
    let flow = straight_flow(&template, &start, &Pose2::new(0.0, 0.0, 0.0), timesteps).expect("valid flow");
    let frames: Vec<Vec<Vec3>> = (0..timesteps).map(|t| flow.frame_positions(t).to_vec()).collect();
    let spec = SceneSpec {
        camera: camera(240, 240, 220.0, look_at(Vec3::new(-0.1, 0.0, 0.45), Vec3::zeros(), -Vec3::x())),
        background: Plane { point: Vec3::new(0.0, 0.0, -0.02), normal: Vec3::z() },
        frames,
    };
    SynthScene {
        bundle: render(&spec, TRUE_CALIBRATION),
        frames: spec.frames,
        planner: PlannerConfig::Pusht(PushConfig { start: Some([start.x, start.y, start.theta]), ..PushConfig::default() }),
        robot: None,
        grasps: Vec::new(),
    }
}

/// Door frame used by the door scene.
pub fn door_frame() -> RigidTransform {
    RigidTransform::from_axis_angle(&Vec3::z(), 0.3, Vec3::new(0.9, 0.3, 0.0))
}

/// Door panel swinging open from closed to 0.8 rad, seen from the side
/// so that the swing shows up as image motion.
pub fn door_scene(timesteps: usize) -> SynthScene {
    let frame = door_frame();
    let geometry = DoorGeometry { frame, ..DoorGeometry::default() };
    let template = geometry.particle_template(8, 10);
    let local = geometry.hinge_flow(&template, 0.0, 0.8, timesteps).expect("valid flow");
    let frames: Vec<Vec<Vec3>> = (0..timesteps)
        .map(|t| local.frame_positions(t).iter().map(|p| frame.transform_point(p)).collect())
        .collect();
    let eye = frame.transform_point(&Vec3::new(-1.0, -1.2, 1.2));
    let target = frame.transform_point(&Vec3::new(0.4, 0.1, 1.0));
    let spec = SceneSpec {
        camera: camera(240, 320, 200.0, look_at(eye, target, -Vec3::z())),
        background: Plane {
            point: frame.transform_point(&Vec3::new(0.0, 1.2, 0.0)),
            normal: frame.transform_vector(&Vec3::y()),
        },
        frames,
    };
    SynthScene {
        bundle: render(&spec, TRUE_CALIBRATION),
        frames: spec.frames,
        planner: PlannerConfig::Door(DoorConfig { frame: PoseJson::from(&frame), ..DoorConfig::default() }),
        robot: None,
        grasps: Vec::new(),
    }
}

pub fn build_scene(scene: Scene, seed: u64) -> Result<SynthScene, CliError> {
    Ok(match scene {
        Scene::Grasp => grasp_scene(12)?,
        Scene::Push => push_scene(seed, 20),
        Scene::Door => door_scene(15),
    })
}

/// Writes `bundle/`, any robot and grasp files, and `config.json` into
/// `dir`; returns the config path.
pub fn write_scene(dir: &Path, scene: Scene, seed: u64) -> Result<PathBuf, CliError> {
    let s = build_scene(scene, seed)?;
    let out = |e: formats::FormatError| CliError::output("synth", &e);
    crate::bundle::write_bundle(&dir.join("bundle"), &s.bundle).map_err(out)?;
    if let Some(robot) = &s.robot {
        formats::write_robot(&dir.join("robot.json"), robot).map_err(out)?;
    }
    if !s.grasps.is_empty() {
        formats::write_grasps(&dir.join("grasps.json"), &s.grasps).map_err(out)?;
    }
    let config = PipelineConfig {
        schema_version: SCHEMA_VERSION,
        seed: Some(seed),
        bundle: "bundle/bundle.json".into(),
        output_dir: "out".into(),
        calibration: CalibrationConfig::default(),
        movable: MovableConfig::default(),
        planner: s.planner,
    };
    let path = dir.join("config.json");
    formats::write_json(&path, &config).map_err(out)?;
    Ok(path)
}
