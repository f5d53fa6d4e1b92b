//! Pipeline configuration: JSON with a schema version, unknown keys
//! rejected, relative paths resolved against the config file.

use std::path::{Path, PathBuf};

use objflow_core::door::MAX_HORIZON;
use objflow_core::push::MAX_STEP;
use objflow_core::trajopt::{CostWeights, DEFAULT_GRASP_RADIUS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::formats::{self, PoseJson};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    /// Master seed; mandatory, but may come from the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    pub bundle: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub movable: MovableConfig,
    pub planner: PlannerConfig,
}

fn default_output_dir() -> PathBuf {
    "out".into()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationRegion {
    /// Every pixel that passes the validity and percentile checks.
    #[default]
    All,
    /// Only pixels inside the object mask.
    ObjectMask,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default)]
    pub region: CalibrationRegion,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovableConfig {
    pub threshold_px: f64,
}

impl Default for MovableConfig {
    fn default() -> Self {
        Self { threshold_px: objflow_core::depthflow::DEFAULT_MOVABLE_THRESHOLD_PX }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerConfig {
    Trajopt(TrajoptConfig),
    Pusht(PushConfig),
    Door(DoorConfig),
}

impl PlannerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Trajopt(_) => "trajopt",
            Self::Pusht(_) => "pusht",
            Self::Door(_) => "door",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub task: f64,
    pub reach: f64,
    pub smooth: f64,
    pub manip: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        let w = CostWeights::default();
        Self { task: w.task, reach: w.reach, smooth: w.smooth, manip: w.manip }
    }
}

impl From<WeightsConfig> for CostWeights {
    fn from(w: WeightsConfig) -> Self {
        CostWeights { task: w.task, reach: w.reach, smooth: w.smooth, manip: w.manip }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajoptConfig {
    /// Robot description; the built-in 7-DOF arm when absent.
    pub robot: Option<PathBuf>,
    pub grasps: PathBuf,
    pub thumb: Option<PathBuf>,
    /// Current joint configuration; IK onto the grasp when absent.
    pub q0: Option<Vec<f64>>,
    pub weights: WeightsConfig,
    /// Optimization steps; the flow length when absent.
    pub horizon: Option<usize>,
    pub grasp_radius: f64,
    pub max_iterations: usize,
    pub dt: f64,
    pub min_translation: f64,
    pub min_rotation_deg: f64,
}

impl Default for TrajoptConfig {
    fn default() -> Self {
        Self {
            robot: None,
            grasps: "grasps.json".into(),
            thumb: None,
            q0: None,
            weights: WeightsConfig::default(),
            horizon: None,
            grasp_radius: DEFAULT_GRASP_RADIUS,
            max_iterations: 300,
            dt: 0.1,
            min_translation: objflow_core::trajopt::DEFAULT_MIN_TRANSLATION,
            min_rotation_deg: objflow_core::trajopt::DEFAULT_MIN_ROTATION.to_degrees(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    #[default]
    Oracle,
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PushConfig {
    /// Block pose `[x, y, θ]` at the first flow frame.
    pub start: Option<[f64; 3]>,
    pub dynamics: DynamicsKind,
    pub samples: usize,
    pub lookahead: usize,
    pub max_pushes: usize,
    pub sim_step: f64,
    pub limit_surface_c: f64,
    pub pusher_friction: f64,
}

impl Default for PushConfig {
    fn default() -> Self {
        let p = objflow_core::push::PlannerConfig::default();
        Self {
            start: None,
            dynamics: DynamicsKind::Oracle,
            samples: p.samples,
            lookahead: p.lookahead,
            max_pushes: p.max_pushes,
            sim_step: p.sim_step,
            limit_surface_c: objflow_core::push::DEFAULT_LIMIT_SURFACE_C,
            pusher_friction: objflow_core::push::DEFAULT_PUSHER_FRICTION,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RewardChoice {
    #[default]
    Flow,
    ObjectState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoorConfig {
    /// Door frame in the robot frame (hinge axis = local z).
    pub frame: PoseJson,
    /// Final hinge angle of the scripted opener, radians.
    pub open_angle: f64,
    pub horizon: usize,
    pub reward: RewardChoice,
    /// Initial end-effector position, door frame; 0.4 m in front of the
    /// handle when absent.
    pub ee_start: Option<[f64; 3]>,
}

impl Default for DoorConfig {
    fn default() -> Self {
        Self {
            frame: PoseJson::identity(),
            open_angle: 0.5,
            horizon: 200,
            reward: RewardChoice::Flow,
            ee_start: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub bundle: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

fn check(ok: bool, msg: &str, errors: &mut Vec<String>) {
    if !ok {
        errors.push(msg.into());
    }
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    v.is_finite() && v >= lo && v <= hi
}

impl PipelineConfig {
    /// Reads the file, applies overrides, resolves paths against the file's
    /// directory (overrides stay relative to the working directory) and
    /// validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig = formats::read_json_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(b) = &o.bundle {
            self.bundle = b.clone();
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.bundle);
        fix(&mut self.output_dir);
        if let PlannerConfig::Trajopt(t) = &mut self.planner {
            fix(&mut t.grasps);
            t.robot.as_mut().map(fix);
            t.thumb.as_mut().map(fix);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut e = Vec::new();
        check(
            self.schema_version == SCHEMA_VERSION,
            &format!("schema_version must be {SCHEMA_VERSION}, got {}", self.schema_version),
            &mut e,
        );
        check(self.seed.is_some(), "seed is mandatory (set \"seed\" or pass --seed)", &mut e);
        check(in_range(self.movable.threshold_px, 1e-6, 1e4), "movable.threshold_px must be in (0, 1e4]", &mut e);
        match &self.planner {
            PlannerConfig::Trajopt(t) => t.validate(&mut e),
            PlannerConfig::Pusht(p) => p.validate(&mut e),
            PlannerConfig::Door(d) => d.validate(&mut e),
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(e))
        }
    }
}

impl TrajoptConfig {
    pub fn validate(&self, e: &mut Vec<String>) {
        let w = self.weights;
        check(
            [w.task, w.reach, w.smooth, w.manip].iter().all(|v| in_range(*v, 0.0, 1e6)),
            "weights must lie in [0, 1e6]",
            e,
        );
        check(w.task > 0.0, "weights.task must be positive", e);
        check(self.horizon.is_none_or(|h| (2..=10_000).contains(&h)), "horizon must be in [2, 10000]", e);
        check(in_range(self.grasp_radius, 1e-4, 1.0), "grasp_radius must be in [1e-4, 1] m", e);
        check((1..=100_000).contains(&self.max_iterations), "max_iterations must be in [1, 100000]", e);
        check(in_range(self.dt, 1e-4, 10.0), "dt must be in [1e-4, 10] s", e);
        check(in_range(self.min_translation, 0.0, 1.0), "min_translation must be in [0, 1] m", e);
        check(in_range(self.min_rotation_deg, 0.0, 180.0), "min_rotation_deg must be in [0, 180]", e);
        if let Some(q) = &self.q0 {
            check(q.iter().all(|v| v.is_finite()), "q0 must be finite", e);
        }
    }
}

impl PushConfig {
    pub fn validate(&self, e: &mut Vec<String>) {
        check(self.start.is_some(), "pusht planner needs a start pose [x, y, theta]", e);
        if let Some(s) = self.start {
            check(s.iter().all(|v| v.is_finite()), "start pose must be finite", e);
        }
        check((1..=4096).contains(&self.samples), "samples must be in [1, 4096]", e);
        check(self.lookahead <= 10_000, "lookahead must be at most 10000", e);
        check((1..=1000).contains(&self.max_pushes), "max_pushes must be in [1, 1000]", e);
        check(self.sim_step > 0.0 && self.sim_step <= MAX_STEP, "sim_step must be in (0, 0.005] m", e);
        check(in_range(self.limit_surface_c, 1e-4, 1.0), "limit_surface_c must be in [1e-4, 1] m", e);
        check(in_range(self.pusher_friction, 0.0, 10.0), "pusher_friction must be in [0, 10]", e);
    }
}

impl DoorConfig {
    pub fn validate(&self, e: &mut Vec<String>) {
        check(self.frame.to_transform().is_ok(), "door frame quaternion must be unit length", e);
        check(
            self.open_angle > 0.0 && self.open_angle <= std::f64::consts::FRAC_PI_2,
            "open_angle must be in (0, pi/2]",
            e,
        );
        check((1..=MAX_HORIZON).contains(&self.horizon), "door horizon must be in [1, 500]", e);
        if let Some(s) = self.ee_start {
            check(s.iter().all(|v| v.is_finite()), "ee_start must be finite", e);
        }
    }
}
