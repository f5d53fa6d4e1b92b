//! Stage implementations shared by the subcommands and `run`, plus the
//! output writers and the end-to-end orchestration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use objflow_core::depthflow::{
    baseline_rigid_trajectory, calibrate_scale_shift, calibration_mask, filter_movable, lift_flow, BaselineFrame,
    BaselineMode, FlowBundle, MovableReport, ObjectFlow3D, ScaleShift,
};
use objflow_core::door::{
    evaluate_scripted_episode, scripted_opener, DoorGeometry, DoorState, EpisodeReport, FlowRewardContext, RewardKind,
};
use objflow_core::kinematics::{IkParams, RobotModel};
use objflow_core::push::{plan_push_episode, Dynamics, Pose2, PushEpisode, TBlockState};
use objflow_core::trajopt::{
    bspline_resample, grasped_subset, initial_guess_from_flow, optimize_trajectory, select_grasp, GraspCandidate,
    GraspReason, GraspSelection, LmOptions, ResampleResult, ThumbTrajectory, TrajOptResult, TrajectorySeed,
};
use objflow_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::bundle::load_bundle;
use crate::config::{
    CalibrationRegion, DoorConfig, DynamicsKind, PipelineConfig, PlannerConfig, PushConfig, RewardChoice,
    TrajoptConfig,
};
use crate::error::CliError;
use crate::formats::{self, CalibrationJson, FormatError};
use crate::manifest::{RunManifest, RunStatus, StageFailure};

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const FLOW_FILE: &str = "flow.csv";
pub const FLOW_SIDECAR_FILE: &str = "flow.json";
pub const MOVABLE_FILE: &str = "movable.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const POSES_FILE: &str = "poses.csv";
pub const TRAJOPT_REPORT_FILE: &str = "trajopt_report.json";
pub const EPISODE_FILE: &str = "episode.json";
pub const REWARD_TRACE_FILE: &str = "reward_trace.csv";
pub const DOOR_SUMMARY_FILE: &str = "door_summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

// ---------------------------------------------------------------- calibrate

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub s: f64,
    pub b: f64,
    /// Pixels that entered the fit.
    pub pixels: usize,
}

impl CalibrationFile {
    pub fn scale_shift(&self) -> ScaleShift {
        ScaleShift { scale: self.s, shift: self.b }
    }
}

/// Aligns the first predicted depth frame to the reference depth.
pub fn calibrate_stage(bundle: &FlowBundle, region: CalibrationRegion) -> Result<CalibrationFile, CliError> {
    let pred = &bundle.depths[0];
    let region = match region {
        CalibrationRegion::All => None,
        CalibrationRegion::ObjectMask => Some(&bundle.object_mask),
    };
    let valid = calibration_mask(pred, &bundle.ref_depth, region);
    let calib = calibrate_scale_shift(pred, &bundle.ref_depth, &valid).map_err(|e| CliError::stage("calibrate", &e))?;
    let out = CalibrationFile { s: calib.scale, b: calib.shift, pixels: valid.count() };
    log::info!(target: "calibrate", s = out.s, b = out.b, pixels = out.pixels; "depth calibrated");
    Ok(out)
}

// --------------------------------------------------------------------- lift

pub fn lift_stage(bundle: &FlowBundle, calib: &CalibrationFile) -> Result<ObjectFlow3D, CliError> {
    let (flow, report) = lift_flow(bundle, &calib.scale_shift()).map_err(|e| CliError::stage("lift", &e))?;
    log::info!(
        target: "lift",
        timesteps = flow.timesteps(),
        points = flow.points(),
        demoted = report.demoted.len(),
        empty_timesteps = report.empty_timesteps.len();
        "flow lifted"
    );
    for (t, i) in &report.demoted {
        log::debug!(target: "lift", t = *t, i = *i; "non-positive calibrated depth, entry demoted");
    }
    Ok(flow)
}

pub fn write_lift(dir: &Path, flow: &ObjectFlow3D, calib: &CalibrationFile) -> Result<Vec<String>, FormatError> {
    formats::write_flow(&dir.join(FLOW_FILE), flow, Some(CalibrationJson { s: calib.s, b: calib.b }))?;
    Ok(vec![FLOW_FILE.into(), FLOW_SIDECAR_FILE.into()])
}

// ------------------------------------------------------------------ movable

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovableFile {
    pub threshold_px: f64,
    pub movable: Vec<usize>,
    pub stationary: Vec<usize>,
    /// Never visible on two consecutive frames.
    pub unclassified: Vec<usize>,
    pub mean_displacement: Vec<Option<f64>>,
    /// `[t, i]` entries invalidated by the part masks.
    pub invalidated: Vec<[usize; 2]>,
}

impl MovableFile {
    pub fn from_report(report: &MovableReport, original: &[bool], points: usize, threshold_px: f64) -> Self {
        let invalidated = original
            .iter()
            .zip(&report.visibility)
            .enumerate()
            .filter(|(_, (a, b))| **a && !**b)
            .map(|(k, _)| [k / points, k % points])
            .collect();
        Self {
            threshold_px,
            movable: report.movable.clone(),
            stationary: report.stationary.clone(),
            unclassified: report.unclassified.clone(),
            mean_displacement: report.mean_displacement.clone(),
            invalidated,
        }
    }

    /// Flow with part-mask invalidations applied (all points kept).
    pub fn constrain(&self, flow: &ObjectFlow3D) -> Result<ObjectFlow3D, CliError> {
        if self.mean_displacement.len() != flow.points() {
            return Err(CliError::validation(format!(
                "movable file describes {} points, flow has {}",
                self.mean_displacement.len(),
                flow.points()
            )));
        }
        if self.movable.iter().any(|&i| i >= flow.points())
            || self.invalidated.iter().any(|&[t, i]| t >= flow.timesteps() || i >= flow.points())
        {
            return Err(CliError::validation("movable file indexes outside the flow"));
        }
        let mut hidden = vec![false; flow.timesteps() * flow.points()];
        for &[t, i] in &self.invalidated {
            hidden[t * flow.points() + i] = true;
        }
        Ok(flow.masked(|t, i| hidden[t * flow.points() + i]))
    }
}

pub fn movable_stage(bundle: &FlowBundle, threshold_px: f64) -> Result<MovableFile, CliError> {
    let report = filter_movable(&bundle.tracks, bundle.part_masks.as_deref(), threshold_px)
        .map_err(|e| CliError::stage("filter-movable", &e))?;
    let file = MovableFile::from_report(&report, bundle.tracks.visibility(), bundle.tracks.points(), threshold_px);
    log::info!(
        target: "filter-movable",
        movable = file.movable.len(),
        stationary = file.stationary.len(),
        unclassified = file.unclassified.len(),
        invalidated = file.invalidated.len();
        "tracks classified"
    );
    Ok(file)
}

/// All points movable, nothing invalidated; used when no movable file is given.
pub fn all_movable(flow: &ObjectFlow3D) -> MovableFile {
    MovableFile {
        threshold_px: 0.0,
        movable: (0..flow.points()).collect(),
        stationary: Vec::new(),
        unclassified: Vec::new(),
        mean_displacement: vec![None; flow.points()],
        invalidated: Vec::new(),
    }
}

// ------------------------------------------------------------------ baseline

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineFrameJson {
    pub t: usize,
    pub pose: formats::PoseJson,
    pub reliable: bool,
    pub correspondences: usize,
}

pub fn baseline_stage(flow: &ObjectFlow3D, mode: BaselineMode) -> Result<Vec<BaselineFrameJson>, CliError> {
    let frames: Vec<BaselineFrame> = baseline_rigid_trajectory(flow, mode).map_err(|e| CliError::stage("fit-rigid", &e))?;
    let unreliable = frames.iter().filter(|f| !f.reliable).count();
    log::info!(target: "fit-rigid", frames = frames.len(), unreliable = unreliable; "rigid baseline fitted");
    Ok(frames
        .iter()
        .enumerate()
        .map(|(t, f)| BaselineFrameJson {
            t,
            pose: (&f.transform).into(),
            reliable: f.reliable,
            correspondences: f.correspondences,
        })
        .collect())
}

// ------------------------------------------------------------------ trajopt

pub struct TrajoptInputs {
    pub model: RobotModel,
    pub grasps: Vec<GraspCandidate>,
    pub thumb: Option<ThumbTrajectory>,
    pub config: TrajoptConfig,
}

impl TrajoptInputs {
    /// Reads the robot, grasp and thumb files named by the config, returning
    /// the paths read.
    pub fn load(config: &TrajoptConfig) -> Result<(Self, Vec<PathBuf>), CliError> {
        let mut files = Vec::new();
        let model = match &config.robot {
            Some(p) => {
                files.push(p.clone());
                formats::read_robot(p)?
            }
            None => RobotModel::franka_like(),
        };
        let grasps = formats::read_grasps(&config.grasps)?;
        files.push(config.grasps.clone());
        if grasps.is_empty() {
            return Err(CliError::validation(format!("{}: no grasp candidates", config.grasps.display())));
        }
        let thumb = match &config.thumb {
            Some(p) => {
                files.push(p.clone());
                Some(formats::read_thumb(p)?)
            }
            None => None,
        };
        if let Some(q0) = &config.q0 {
            if q0.len() != model.dof() {
                return Err(CliError::validation(format!("q0 has {} entries, robot has {} joints", q0.len(), model.dof())));
            }
        }
        Ok((Self { model, grasps, thumb, config: config.clone() }, files))
    }
}

pub struct TrajoptOutcome {
    pub result: TrajOptResult,
    pub selection: GraspSelection,
    pub grasped: Vec<usize>,
    pub horizon: usize,
    pub resampled: ResampleResult,
}

pub fn trajopt_stage(flow: &ObjectFlow3D, movable: &MovableFile, inputs: &TrajoptInputs) -> Result<TrajoptOutcome, CliError> {
    let stage = |e: objflow_core::Error| CliError::stage("trajopt", &e);
    let cfg = &inputs.config;
    let flow = movable.constrain(flow)?;
    let points0 = flow.frame_positions(0);
    let visible0 = flow.frame_visibility(0);
    let movable_points: Vec<Vec3> = movable.movable.iter().filter(|&&i| visible0[i]).map(|&i| points0[i]).collect();
    let empty = ThumbTrajectory { positions: Vec::new(), detected: Vec::new() };
    let selection = select_grasp(&inputs.grasps, inputs.thumb.as_ref().unwrap_or(&empty), &movable_points).map_err(stage)?;
    let grasp = selection.candidate.pose;
    let grasped = grasped_subset(points0, visible0, &movable.movable, &grasp, cfg.grasp_radius);
    log::info!(target: "trajopt", grasp = selection.index, grasped = grasped.len(); "grasp selected");

    let model = &inputs.model;
    let q0 = match &cfg.q0 {
        Some(q) => DVector::from_column_slice(q),
        None => model.ik_dls(&grasp, model.mid_configuration().as_slice(), &IkParams::default()).q,
    };
    let horizon = cfg.horizon.unwrap_or(flow.timesteps());
    let seed = initial_guess_from_flow(model, &flow, &grasp, &grasped, &q0, horizon).map_err(stage)?;
    let options = LmOptions { max_iterations: cfg.max_iterations, dt: cfg.dt, ..LmOptions::default() };
    let result = optimize_trajectory(
        model,
        &flow,
        &grasp,
        &grasped,
        cfg.weights.into(),
        &TrajectorySeed::Full(seed),
        horizon,
        &options,
    )
    .map_err(stage)?;
    let resampled = bspline_resample(&result.ee_poses, cfg.min_translation, cfg.min_rotation_deg.to_radians());
    log::info!(
        target: "trajopt",
        converged = result.converged,
        iterations = result.iterations,
        task = result.costs.task,
        total = result.costs.total,
        waypoints = resampled.poses.len();
        "trajectory optimized"
    );
    Ok(TrajoptOutcome { result, selection, grasped, horizon, resampled })
}

#[derive(Serialize)]
struct CostsJson {
    task: f64,
    reachability: f64,
    smoothness: f64,
    manipulability: f64,
    total: f64,
}

#[derive(Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
enum GraspReasonJson {
    Thumb { timestep: usize, distance: f64 },
    MovableCentroid { distance: f64 },
}

#[derive(Serialize)]
struct TrajoptReport {
    converged: bool,
    iterations: usize,
    horizon: usize,
    costs: CostsJson,
    cost_history: Vec<f64>,
    grasp_index: usize,
    grasp_reason: GraspReasonJson,
    grasp_pose: formats::PoseJson,
    grasped: Vec<usize>,
    waypoints: usize,
    waypoints_passthrough: bool,
}

pub fn write_trajopt(dir: &Path, out: &TrajoptOutcome) -> Result<Vec<String>, FormatError> {
    let r = &out.result;
    let dof = r.trajectory.configurations.first().map_or(0, |q| q.len());
    let mut text = String::from("step");
    for j in 0..dof {
        text.push_str(&format!(",q{j}"));
    }
    text.push('\n');
    for (k, q) in r.trajectory.configurations.iter().enumerate() {
        text.push_str(&k.to_string());
        for v in q.iter() {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    formats::write_atomic(&dir.join(TRAJECTORY_FILE), text.as_bytes())?;

    let mut poses = String::from("k,param,x,y,z,qw,qx,qy,qz\n");
    for (k, (p, s)) in out.resampled.poses.iter().zip(&out.resampled.parameters).enumerate() {
        let t = p.translation();
        let q = p.quaternion_wxyz();
        poses.push_str(&format!("{k},{s},{},{},{},{},{},{},{}\n", t.x, t.y, t.z, q[0], q[1], q[2], q[3]));
    }
    formats::write_atomic(&dir.join(POSES_FILE), poses.as_bytes())?;

    let report = TrajoptReport {
        converged: r.converged,
        iterations: r.iterations,
        horizon: out.horizon,
        costs: CostsJson {
            task: r.costs.task,
            reachability: r.costs.reachability,
            smoothness: r.costs.smoothness,
            manipulability: r.costs.manipulability,
            total: r.costs.total,
        },
        cost_history: r.cost_history.clone(),
        grasp_index: out.selection.index,
        grasp_reason: match out.selection.reason {
            GraspReason::Thumb { timestep, distance } => GraspReasonJson::Thumb { timestep, distance },
            GraspReason::MovableCentroid { distance } => GraspReasonJson::MovableCentroid { distance },
        },
        grasp_pose: (&out.selection.candidate.pose).into(),
        grasped: out.grasped.clone(),
        waypoints: out.resampled.poses.len(),
        waypoints_passthrough: out.resampled.passthrough,
    };
    formats::write_json(&dir.join(TRAJOPT_REPORT_FILE), &report)?;
    Ok(vec![TRAJECTORY_FILE.into(), POSES_FILE.into(), TRAJOPT_REPORT_FILE.into()])
}

// -------------------------------------------------------------------- pusht

fn pose_array(p: &Pose2) -> [f64; 3] {
    [p.x, p.y, p.theta]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushJson {
    pub start: [f64; 2],
    pub direction: [f64; 2],
    pub distance: f64,
    pub predicted_cost: f64,
    /// Block pose after the push.
    pub pose: [f64; 3],
    pub t_star: usize,
    pub subgoal: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeJson {
    pub dynamics: DynamicsKind,
    pub seed: u64,
    pub particles: usize,
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub final_pose: [f64; 3],
    pub success: bool,
    pub pushes: Vec<PushJson>,
}

impl EpisodeJson {
    pub fn new(ep: &PushEpisode, dynamics: DynamicsKind, seed: u64, particles: usize) -> Self {
        Self {
            dynamics,
            seed,
            particles,
            start: pose_array(&ep.start),
            goal: pose_array(&ep.goal),
            final_pose: pose_array(&ep.final_pose),
            success: ep.success,
            pushes: ep
                .pushes
                .iter()
                .map(|r| PushJson {
                    start: [r.push.start.x, r.push.start.y],
                    direction: [r.push.direction.x, r.push.direction.y],
                    distance: r.push.distance,
                    predicted_cost: r.predicted_cost,
                    pose: pose_array(&r.pose),
                    t_star: r.t_star,
                    subgoal: r.subgoal,
                })
                .collect(),
        }
    }
}

/// Plans over the movable particles that are visible in both the first and
/// the last flow frame.
pub fn pusht_stage(flow: &ObjectFlow3D, movable: &MovableFile, cfg: &PushConfig, seed: u64) -> Result<EpisodeJson, CliError> {
    let flow = movable.constrain(flow)?;
    let last = flow.timesteps() - 1;
    let keep: Vec<usize> = movable.movable.iter().copied().filter(|&i| flow.visible(0, i) && flow.visible(last, i)).collect();
    let particles = flow.select_points(&keep);
    let [x, y, theta] = cfg.start.ok_or_else(|| CliError::validation("pusht needs a start pose"))?;
    let start = TBlockState {
        friction_param: cfg.limit_surface_c,
        pusher_friction: cfg.pusher_friction,
        ..TBlockState::new(Pose2::new(x, y, theta))
    };
    let planner = objflow_core::push::PlannerConfig {
        samples: cfg.samples,
        lookahead: cfg.lookahead,
        max_pushes: cfg.max_pushes,
        seed,
        sim_step: cfg.sim_step,
        ..objflow_core::push::PlannerConfig::default()
    };
    let dynamics = match cfg.dynamics {
        DynamicsKind::Oracle => Dynamics::Oracle,
        DynamicsKind::Heuristic => Dynamics::Heuristic,
    };
    let ep = plan_push_episode(&start, &particles, dynamics, &planner).map_err(|e| CliError::stage("pusht", &e))?;
    log::info!(target: "pusht", success = ep.success, pushes = ep.pushes.len(), particles = keep.len(); "push episode planned");
    Ok(EpisodeJson::new(&ep, cfg.dynamics, seed, keep.len()))
}

pub fn write_episode(dir: &Path, ep: &EpisodeJson) -> Result<Vec<String>, FormatError> {
    formats::write_json(&dir.join(EPISODE_FILE), ep)?;
    Ok(vec![EPISODE_FILE.into()])
}

// --------------------------------------------------------------------- door

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoorSummary {
    pub reward: RewardChoice,
    pub particles: usize,
    pub steps: usize,
    pub success: bool,
    pub success_step: Option<usize>,
    pub final_hinge_angle: f64,
    pub final_reward: f64,
    /// Particle progress term never decreased over the episode.
    pub particle_reward_monotone: bool,
}

pub struct DoorOutcome {
    pub report: EpisodeReport,
    pub summary: DoorSummary,
}

/// Replays the scripted opener against the lifted flow. The flow is
/// expressed in the door frame and its first frame is taken as the closed
/// panel, which fixes the particle template.
pub fn door_stage(flow: &ObjectFlow3D, movable: &MovableFile, cfg: &DoorConfig) -> Result<DoorOutcome, CliError> {
    let stage = |e: objflow_core::Error| CliError::stage("door-eval", &e);
    let frame = cfg.frame.to_transform().map_err(stage)?;
    let flow = movable.constrain(flow)?;
    let keep: Vec<usize> = movable.movable.iter().copied().filter(|&i| flow.visible(0, i)).collect();
    let to_door = frame.inverse();
    let local = flow.select_points(&keep).map_positions(|p| to_door.transform_point(p));
    let template = local.frame_positions(0).to_vec();
    let ctx = FlowRewardContext::new(local, template).map_err(stage)?;

    let geometry = DoorGeometry { frame, ..DoorGeometry::default() };
    let ee_local = match cfg.ee_start {
        Some([x, y, z]) => Vec3::new(x, y, z),
        None => {
            let closed = DoorState::closed(DoorGeometry { frame: objflow_core::RigidTransform::identity(), ..geometry }, Vec3::zeros());
            closed.handle_position() + Vec3::new(0.0, -0.4, 0.0)
        }
    };
    let start = DoorState::closed(geometry, frame.transform_point(&ee_local));
    let kind = match cfg.reward {
        RewardChoice::Flow => RewardKind::Flow,
        RewardChoice::ObjectState => RewardKind::ObjectState,
    };
    let waypoints = scripted_opener(&geometry, cfg.open_angle);
    let report = evaluate_scripted_episode(&start, &waypoints, Some(&ctx), kind, cfg.horizon).map_err(stage)?;
    let particle: Vec<f64> = report.steps.iter().filter_map(|s| s.particle_reward).collect();
    let summary = DoorSummary {
        reward: cfg.reward,
        particles: keep.len(),
        steps: report.steps.len(),
        success: report.success,
        success_step: report.success_step,
        final_hinge_angle: report.final_state.hinge_angle,
        final_reward: report.steps.last().map_or(0.0, |s| s.reward),
        particle_reward_monotone: particle.windows(2).all(|w| w[1] >= w[0]),
    };
    log::info!(
        target: "door-eval",
        success = summary.success,
        final_hinge_angle = summary.final_hinge_angle,
        particles = summary.particles;
        "door episode evaluated"
    );
    Ok(DoorOutcome { report, summary })
}

pub fn write_door(dir: &Path, out: &DoorOutcome) -> Result<Vec<String>, FormatError> {
    let mut text = String::from("step,reward,t_star,theta_hinge\n");
    for s in &out.report.steps {
        let t = s.t_star.map(|t| t.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{},{}\n", s.step, s.reward, t, s.hinge_angle));
    }
    formats::write_atomic(&dir.join(REWARD_TRACE_FILE), text.as_bytes())?;
    formats::write_json(&dir.join(DOOR_SUMMARY_FILE), &out.summary)?;
    Ok(vec![REWARD_TRACE_FILE.into(), DOOR_SUMMARY_FILE.into()])
}

// ---------------------------------------------------------------------- run

enum PlannerInputs {
    Trajopt(Box<TrajoptInputs>),
    Pusht(PushConfig),
    Door(DoorConfig),
}

struct Runner {
    manifest: RunManifest,
    dir: PathBuf,
}

impl Runner {
    fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }

    /// Runs one stage; on failure the manifest is written with the stage
    /// name and error kind, keeping earlier outputs on disk.
    fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&Path) -> Result<(T, Vec<String>), CliError>,
    ) -> Result<T, CliError> {
        log::info!(target: "run", stage = name; "stage started");
        let clock = Instant::now();
        let result = f(&self.dir).and_then(|(value, outputs)| {
            self.manifest
                .add_stage(name, clock.elapsed().as_secs_f64(), &self.dir, &outputs)
                .map_err(|e| CliError::output(name, &e))?;
            Ok(value)
        });
        if let Err(e) = &result {
            let kind = match e {
                CliError::Stage { kind, .. } => kind.clone(),
                CliError::Validation(_) => "validation".into(),
                CliError::NotConverged { .. } => "not_converged".into(),
            };
            self.manifest.status = RunStatus::Failed;
            self.manifest.failure = Some(StageFailure { stage: name.into(), kind, message: e.to_string() });
            self.manifest.write(&self.manifest_path()).map_err(|w| CliError::output("run", &w))?;
            log::error!(target: "run", stage = name; "{e}");
        }
        result
    }
}

/// calibrate → lift → filter-movable → planner, writing every output and
/// the manifest under the configured output directory.
///
/// All inputs are loaded and validated before the first stage runs. A
/// non-converged trajectory optimization still completes the run, with
/// status `not_converged`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let loaded = load_bundle(&cfg.bundle).map_err(|r| CliError::Validation(r.violations))?;
    let mut files = loaded.files.clone();
    let planner = match &cfg.planner {
        PlannerConfig::Trajopt(t) => {
            let (inputs, extra) = TrajoptInputs::load(t)?;
            files.extend(extra);
            PlannerInputs::Trajopt(Box::new(inputs))
        }
        PlannerConfig::Pusht(p) => PlannerInputs::Pusht(p.clone()),
        PlannerConfig::Door(d) => PlannerInputs::Door(d.clone()),
    };
    let snapshot = serde_json::to_value(cfg).expect("config serializes");
    let mut manifest = RunManifest::new(snapshot);
    manifest.add_inputs(&files)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::output("run", &FormatError::Io { path: cfg.output_dir.clone(), source: e }))?;

    let bundle = &loaded.bundle;
    let mut run = Runner { manifest, dir: cfg.output_dir.clone() };
    let calib = run.stage("calibrate", |dir| {
        let c = calibrate_stage(bundle, cfg.calibration.region)?;
        formats::write_json(&dir.join(CALIBRATION_FILE), &c).map_err(|e| CliError::output("calibrate", &e))?;
        Ok((c, vec![CALIBRATION_FILE.into()]))
    })?;
    let flow = run.stage("lift", |dir| {
        let flow = lift_stage(bundle, &calib)?;
        let outs = write_lift(dir, &flow, &calib).map_err(|e| CliError::output("lift", &e))?;
        Ok((flow, outs))
    })?;
    let movable = run.stage("filter-movable", |dir| {
        let m = movable_stage(bundle, cfg.movable.threshold_px)?;
        formats::write_json(&dir.join(MOVABLE_FILE), &m).map_err(|e| CliError::output("filter-movable", &e))?;
        Ok((m, vec![MOVABLE_FILE.into()]))
    })?;
    let name = cfg.planner.name();
    let converged = run.stage(name, |dir| match &planner {
        PlannerInputs::Trajopt(inputs) => {
            let out = trajopt_stage(&flow, &movable, inputs)?;
            let files = write_trajopt(dir, &out).map_err(|e| CliError::output(name, &e))?;
            Ok((out.result.converged, files))
        }
        PlannerInputs::Pusht(p) => {
            let ep = pusht_stage(&flow, &movable, p, cfg.seed())?;
            Ok((true, write_episode(dir, &ep).map_err(|e| CliError::output(name, &e))?))
        }
        PlannerInputs::Door(d) => {
            let out = door_stage(&flow, &movable, d)?;
            Ok((true, write_door(dir, &out).map_err(|e| CliError::output(name, &e))?))
        }
    })?;
    if !converged {
        run.manifest.status = RunStatus::NotConverged;
    }
    run.manifest.write(&run.manifest_path()).map_err(|e| CliError::output("run", &e))?;
    log::info!(target: "run", stages = run.manifest.stages.len(); "run finished");
    Ok(run.manifest)
}
