use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use objflow::bundle::{load_bundle, validate_bundle};
use objflow::config::{
    CalibrationRegion, DoorConfig, DynamicsKind, Overrides, PipelineConfig, PushConfig, RewardChoice, TrajoptConfig,
    WeightsConfig,
};
use objflow::error::{CliError, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VALIDATION};
use objflow::formats::{self, FormatError, PoseJson};
use objflow::manifest::RunStatus;
use objflow::pipeline::{self, CalibrationFile, MovableFile, TrajoptInputs};
use objflow::synth::{self, Scene};
use objflow_core::depthflow::{BaselineMode, FlowBundle, ObjectFlow3D};

#[derive(Parser)]
#[command(name = "objflow", version, about = "Turn 3D object flow into robot actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit depth scale and shift of the first predicted frame to the reference depth.
    Calibrate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = CalibrationRegion::All)]
        region: CalibrationRegion,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lift 2D tracks into robot-frame 3D flow (CSV plus JSON sidecar).
    Lift {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split tracks into movable and stationary by mean pixel displacement.
    FilterMovable {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = objflow_core::depthflow::DEFAULT_MOVABLE_THRESHOLD_PX)]
        threshold_px: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-frame rigid transforms of the flow relative to its first frame.
    FitRigid {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long, value_enum, default_value_t = Mode::Avdc)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a joint trajectory that reproduces the flow under a rigid grasp.
    PlanTraj(PlanTrajArgs),
    /// Plan pushes that move the T-block along the flow.
    Pusht(PushArgs),
    /// Replay a scripted door opener and score it with the flow reward.
    DoorEval(DoorArgs),
    /// Run calibrate, lift, filter-movable and the configured planner.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check a bundle and list every violation.
    Validate { bundle: PathBuf },
    /// Write a synthetic scene (bundle, config and scene files).
    Synth {
        #[arg(long, value_enum)]
        scene: Scene,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Avdc,
    Rigvid,
}

#[derive(Args)]
struct FlowArgs {
    /// Flow CSV; the sidecar is read from the same stem with `.json`.
    #[arg(long)]
    flow: PathBuf,
    /// Output of `filter-movable`; every point counts as movable without it.
    #[arg(long)]
    movable: Option<PathBuf>,
}

#[derive(Args)]
struct PlanTrajArgs {
    #[command(flatten)]
    flow: FlowArgs,
    #[arg(long)]
    grasps: PathBuf,
    #[arg(long)]
    robot: Option<PathBuf>,
    #[arg(long)]
    thumb: Option<PathBuf>,
    /// Comma-separated start configuration.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<usize>,
    /// task,reach,smooth,manip
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    grasp_radius: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PushArgs {
    #[command(flatten)]
    flow: FlowArgs,
    /// Block pose at the first flow frame: x,y,theta.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    start: Vec<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = DynamicsKind::Oracle)]
    dynamics: DynamicsKind,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    lookahead: Option<usize>,
    #[arg(long)]
    max_pushes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DoorArgs {
    #[command(flatten)]
    flow: FlowArgs,
    /// Door frame in the robot frame: tx,ty,tz,qw,qx,qy,qz.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    door_frame: Option<Vec<f64>>,
    #[arg(long)]
    open_angle: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_enum, default_value_t = RewardChoice::Flow)]
    reward: RewardChoice,
    #[arg(long)]
    out_dir: PathBuf,
}

fn load(path: &Path) -> Result<FlowBundle, CliError> {
    load_bundle(path).map(|b| b.bundle).map_err(|r| CliError::Validation(r.violations))
}

fn load_flow(args: &FlowArgs) -> Result<(ObjectFlow3D, MovableFile), CliError> {
    let (flow, _) = formats::read_flow(&args.flow)?;
    let movable = match &args.movable {
        Some(p) => formats::read_json_file(p)?,
        None => pipeline::all_movable(&flow),
    };
    Ok((flow, movable))
}

fn checked(errors: Vec<String>) -> Result<(), CliError> {
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(errors))
    }
}

fn written(stage: &str) -> impl Fn(FormatError) -> CliError + '_ {
    move |e| CliError::output(stage, &e)
}

fn fixed<const N: usize>(flag: &str, values: &[f64]) -> Result<[f64; N], CliError> {
    values
        .try_into()
        .map_err(|_| CliError::validation(format!("{flag} takes {N} comma-separated values, got {}", values.len())))
}

fn plan_traj(a: PlanTrajArgs) -> Result<i32, CliError> {
    let defaults = TrajoptConfig::default();
    let weights = match a.weights.as_deref() {
        Some(v) => {
            let [task, reach, smooth, manip] = fixed("--weights", v)?;
            WeightsConfig { task, reach, smooth, manip }
        }
        None => defaults.weights,
    };
    let cfg = TrajoptConfig {
        robot: a.robot,
        grasps: a.grasps,
        thumb: a.thumb,
        q0: a.q0,
        weights,
        horizon: a.horizon,
        grasp_radius: a.grasp_radius.unwrap_or(defaults.grasp_radius),
        max_iterations: a.max_iterations.unwrap_or(defaults.max_iterations),
        ..defaults
    };
    let mut errors = Vec::new();
    cfg.validate(&mut errors);
    checked(errors)?;
    let (inputs, _) = TrajoptInputs::load(&cfg)?;
    let (flow, movable) = load_flow(&a.flow)?;
    let out = pipeline::trajopt_stage(&flow, &movable, &inputs)?;
    pipeline::write_trajopt(&a.out_dir, &out).map_err(written("trajopt"))?;
    let r = &out.result;
    println!("converged={} iterations={} task_cost={:e}", r.converged, r.iterations, r.costs.task);
    Ok(if r.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn pusht(a: PushArgs) -> Result<i32, CliError> {
    let defaults = PushConfig::default();
    let cfg = PushConfig {
        start: Some(fixed("--start", &a.start)?),
        dynamics: a.dynamics,
        samples: a.samples.unwrap_or(defaults.samples),
        lookahead: a.lookahead.unwrap_or(defaults.lookahead),
        max_pushes: a.max_pushes.unwrap_or(defaults.max_pushes),
        ..defaults
    };
    let mut errors = Vec::new();
    cfg.validate(&mut errors);
    checked(errors)?;
    let (flow, movable) = load_flow(&a.flow)?;
    let ep = pipeline::pusht_stage(&flow, &movable, &cfg, a.seed)?;
    formats::write_json(&a.out, &ep).map_err(written("pusht"))?;
    println!("success={} pushes={}", ep.success, ep.pushes.len());
    Ok(EXIT_OK)
}

fn door_eval(a: DoorArgs) -> Result<i32, CliError> {
    let defaults = DoorConfig::default();
    let frame = match a.door_frame.as_deref() {
        Some(v) => {
            let [tx, ty, tz, qw, qx, qy, qz] = fixed("--door-frame", v)?;
            PoseJson { translation: [tx, ty, tz], quaternion_wxyz: [qw, qx, qy, qz] }
        }
        None => defaults.frame,
    };
    let cfg = DoorConfig {
        frame,
        open_angle: a.open_angle.unwrap_or(defaults.open_angle),
        horizon: a.horizon.unwrap_or(defaults.horizon),
        reward: a.reward,
        ..defaults
    };
    let mut errors = Vec::new();
    cfg.validate(&mut errors);
    checked(errors)?;
    let (flow, movable) = load_flow(&a.flow)?;
    let out = pipeline::door_stage(&flow, &movable, &cfg)?;
    pipeline::write_door(&a.out_dir, &out).map_err(written("door-eval"))?;
    println!(
        "success={} final_hinge_angle={:.4} particle_reward_monotone={}",
        out.summary.success, out.summary.final_hinge_angle, out.summary.particle_reward_monotone
    );
    Ok(EXIT_OK)
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Calibrate { bundle, region, out } => {
            let c = pipeline::calibrate_stage(&load(&bundle)?, region)?;
            formats::write_json(&out, &c).map_err(written("calibrate"))?;
            println!("s={} b={} pixels={}", c.s, c.b, c.pixels);
        }
        Command::Lift { bundle, calibration, out } => {
            let bundle = load(&bundle)?;
            let calib: CalibrationFile = formats::read_json_file(&calibration)?;
            if !(calib.s.is_finite() && calib.s > 0.0 && calib.b.is_finite()) {
                return Err(CliError::validation(format!("{}: scale must be positive", calibration.display())));
            }
            let flow = pipeline::lift_stage(&bundle, &calib)?;
            formats::write_flow(&out, &flow, Some(formats::CalibrationJson { s: calib.s, b: calib.b }))
                .map_err(written("lift"))?;
            println!("timesteps={} points={} visible={}", flow.timesteps(), flow.points(), flow.visible_count());
        }
        Command::FilterMovable { bundle, threshold_px, out } => {
            if !(threshold_px.is_finite() && threshold_px > 0.0) {
                return Err(CliError::validation("threshold-px must be positive"));
            }
            let m = pipeline::movable_stage(&load(&bundle)?, threshold_px)?;
            formats::write_json(&out, &m).map_err(written("filter-movable"))?;
            println!("movable={} stationary={} unclassified={}", m.movable.len(), m.stationary.len(), m.unclassified.len());
        }
        Command::FitRigid { flow, mode, out } => {
            let (f, movable) = load_flow(&flow)?;
            let f = movable.constrain(&f)?.select_points(&movable.movable);
            let mode = match mode {
                Mode::Avdc => BaselineMode::Avdc,
                Mode::Rigvid => BaselineMode::Rigvid,
            };
            let frames = pipeline::baseline_stage(&f, mode)?;
            formats::write_json(&out, &frames).map_err(written("fit-rigid"))?;
            println!("frames={} unreliable={}", frames.len(), frames.iter().filter(|f| !f.reliable).count());
        }
        Command::PlanTraj(a) => return plan_traj(a),
        Command::Pusht(a) => return pusht(a),
        Command::DoorEval(a) => return door_eval(a),
        Command::Run { config, seed, bundle, output_dir } => {
            let cfg = PipelineConfig::load(&config, &Overrides { seed, bundle, output_dir })?;
            let manifest = pipeline::run_pipeline(&cfg)?;
            let path = cfg.output_dir.join(pipeline::MANIFEST_FILE);
            println!("status={:?} manifest={}", manifest.status, path.display());
            if manifest.status == RunStatus::NotConverged {
                return Ok(EXIT_NOT_CONVERGED);
            }
        }
        Command::Validate { bundle } => {
            let report = validate_bundle(&bundle);
            for v in &report.violations {
                println!("{v}");
            }
            if !report.is_ok() {
                println!("{} violation(s)", report.violations.len());
                return Ok(EXIT_VALIDATION);
            }
            println!("ok");
        }
        Command::Synth { scene, seed, out_dir } => {
            let path = synth::write_scene(&out_dir, scene, seed)?;
            println!("config={}", path.display());
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    objflow::logging::init();
    let cli = Cli::parse();
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
