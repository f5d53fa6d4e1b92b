//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DVector, Matrix3};
use objflow_core::depthflow::{
    baseline_rigid_trajectory, calibrate_scale_shift, calibration_mask, BaselineMode, DepthMap, ObjectFlow3D,
};
use objflow_core::door::{
    evaluate_scripted_episode, flow_reward, object_state_reward, scripted_opener, DoorGeometry, DoorState,
    FlowRewardContext, RewardKind,
};
use objflow_core::kinematics::{IkParams, RobotModel};
use objflow_core::push::{plan_push_episode, straight_flow, Dynamics, PlannerConfig, Pose2, TBlockState};
use objflow_core::rng::{stage_rng, Stage};
use objflow_core::se3::{fit_rigid, rotation_log};
use objflow_core::trajopt::{
    bspline_resample, initial_guess_from_flow, optimize_trajectory, rigid_grasp_rollout, CostWeights, LmOptions,
    TrackingProblem, TrajOptResult, TrajectorySeed, DEFAULT_MIN_ROTATION, DEFAULT_MIN_TRANSLATION,
};
use objflow_core::{Error, RigidTransform, Vec3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_transform(rng: &mut impl Rng) -> RigidTransform {
    let axis = loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            break v.normalize();
        }
    };
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let t = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    RigidTransform::from_axis_angle(&axis, angle, t)
}

fn calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (w, h) = (100u32, 100u32);
    let mut elapsed = 0.0;
    let (mut worst_oracle, mut worst_truth) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let s = rng.random_range(0.5..2.0);
        let b = rng.random_range(0.1..0.5);
        let (a1, a2, a3) = (rng.random_range(0.0..6.0), rng.random_range(0.0..6.0), rng.random_range(0.3..0.8));
        let reference = DepthMap::from_fn(w, h, |x, y| {
            let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
            (0.5 + 1.6 * u + a3 * (1.0 + (a1 * u + a2 * v).sin()) * v) as f32
        });
        let noise = Normal::new(0.0, 0.005).unwrap();
        let pred = DepthMap::from_fn(w, h, |x, y| {
            let d = reference.get(x, y);
            ((d - b) / s * (1.0 + noise.sample(&mut rng))) as f32
        });

        let start = Instant::now();
        let mask = calibration_mask(&pred, &reference, None);
        let fit = calibrate_scale_shift(&pred, &reference, &mask).map_err(|e| e.to_string())?;
        elapsed += start.elapsed().as_secs_f64();

        // Normal equations of [x 1]·[s b]ᵀ = y, with both axes shifted by
        // one sample to keep the 2×2 determinant well conditioned.
        let (x0, y0) = (pred.get(0, 0), reference.get(0, 0));
        let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) {
                    let (p, r) = (pred.get(x, y) - x0, reference.get(x, y) - y0);
                    n += 1.0;
                    sx += p;
                    sy += r;
                    sxx += p * p;
                    sxy += p * r;
                }
            }
        }
        let det = n * sxx - sx * sx;
        let os = (n * sxy - sx * sy) / det;
        let ob = (sxx * sy - sx * sxy) / det + y0 - os * x0;
        worst_oracle = worst_oracle.max((fit.scale - os).abs() / os.abs()).max((fit.shift - ob).abs() / ob.abs().max(1.0));
        worst_truth = worst_truth.max((fit.scale - s).abs() / s).max((fit.shift - b).abs() / b);
    }
    check(
        worst_oracle < 1e-12 && worst_truth < 0.01 && elapsed < 1.0,
        format!("oracle rel err {worst_oracle:.1e}, truth rel err {worst_truth:.2e}, {elapsed:.3} s"),
    )
}

fn rigid_fit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut rot, mut trans) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let truth = random_transform(&mut rng);
        let src: Vec<Vec3> = (0..10)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let dst: Vec<Vec3> = src.iter().map(|p| truth.transform_point(p)).collect();
        let fit = fit_rigid(&src, &dst, &[1.0; 10]).map_err(|e| e.to_string())?;
        rot = rot.max(fit.rotation_angle_to(&truth));
        trans = trans.max(fit.translation_distance(&truth));
    }
    let line: Vec<Vec3> = (0..10).map(|k| Vec3::new(0.1, -0.2, 0.3) * k as f64).collect();
    let degenerate = matches!(fit_rigid(&line, &line, &[1.0; 10]), Err(Error::DegenerateGeometry));
    check(
        rot < 1e-9 && trans < 1e-9 && degenerate,
        format!("max rotation err {rot:.1e} rad, max translation err {trans:.1e} m, collinear rejected: {degenerate}"),
    )
}

struct Fixture {
    model: RobotModel,
    flow: ObjectFlow3D,
    grasp: RigidTransform,
    grasped: Vec<usize>,
    truth: Vec<DVector<f64>>,
    q0: DVector<f64>,
}

/// Constant-velocity translation of a 40-point object held at the end
/// effector, plus two static points.
fn fixture(horizon: usize) -> Fixture {
    let model = RobotModel::franka_like();
    let q0 = DVector::from_vec(vec![0.1, -0.3, 0.05, -2.0, 0.05, 1.8, 0.7]);
    let start = model.fk(q0.as_slice());
    let params = IkParams {
        position_tolerance: 1e-11,
        rotation_tolerance: 1e-10,
        max_iterations: 500,
        ..IkParams::default()
    };
    let mut q = q0.clone();
    let truth: Vec<DVector<f64>> = (0..horizon)
        .map(|t| {
            let s = t as f64 / (horizon - 1) as f64;
            let target = RigidTransform::from_translation(Vec3::new(0.12 * s, 0.06 * s, 0.04 * s)).compose(&start);
            let sol = model.ik_dls(&target, q.as_slice(), &params);
            assert!(sol.converged);
            q = sol.q;
            q.clone()
        })
        .collect();
    let ee: Vec<_> = truth.iter().map(|q| model.fk(q.as_slice())).collect();
    let grasp = ee[0];
    let mut pts = Vec::new();
    for i in 0..5 {
        for j in 0..4 {
            for k in 0..2 {
                let local = Vec3::new(-0.04 + 0.02 * i as f64, -0.03 + 0.02 * j as f64, 0.02 + 0.03 * k as f64);
                pts.push(grasp.transform_point(&local));
            }
        }
    }
    let grasped: Vec<usize> = (0..pts.len()).collect();
    pts.push(grasp.transform_point(&Vec3::new(0.3, 0.0, -0.1)));
    pts.push(grasp.transform_point(&Vec3::new(0.3, 0.1, -0.1)));
    let frames = rigid_grasp_rollout(&grasp, &ee, &pts, &grasped);
    Fixture {
        model,
        flow: ObjectFlow3D::from_frames(&frames).unwrap(),
        grasp,
        grasped,
        truth,
        q0,
    }
}

fn solve(fx: &Fixture, flow: &ObjectFlow3D) -> Result<TrajOptResult, String> {
    let h = fx.truth.len();
    let seed = initial_guess_from_flow(&fx.model, flow, &fx.grasp, &fx.grasped, &fx.q0, h).map_err(|e| e.to_string())?;
    optimize_trajectory(
        &fx.model,
        flow,
        &fx.grasp,
        &fx.grasped,
        CostWeights::default(),
        &TrajectorySeed::Full(seed),
        h,
        &LmOptions::default(),
    )
    .map_err(|e| e.to_string())
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let fx = fixture(12);
    let res = solve(&fx, &fx.flow)?;
    let elapsed = start.elapsed().as_secs_f64();
    let pts0 = fx.flow.frame_positions(0);
    let predicted = rigid_grasp_rollout(&fx.grasp, &res.ee_poses, pts0, &fx.grasped);
    let last = fx.flow.timesteps() - 1;
    let sq: f64 = fx
        .grasped
        .iter()
        .map(|&i| (predicted.last().unwrap()[i] - fx.flow.frame_positions(last)[i]).norm_squared())
        .sum();
    let rmse = (sq / fx.grasped.len() as f64).sqrt();
    let w = CostWeights::default();
    let weights_ok = (w.task, w.reach, w.smooth, w.manip) == (10.0, 100.0, 1.0, 0.01);
    check(
        res.costs.task < 1e-6 && rmse < 0.01 && elapsed < 60.0 && weights_ok,
        format!(
            "task cost {:.2e} m², final RMSE {:.2e} m, {} iterations, {elapsed:.2} s",
            res.costs.task, rmse, res.iterations
        ),
    )
}

fn gradients() -> Outcome {
    let fx = fixture(6);
    let problem = TrackingProblem::new(&fx.model, &fx.flow, &fx.grasp, &fx.grasped, CostWeights::default(), 6)
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = fx.model.dof();
    let mut worst_grad = 0.0f64;
    for _ in 0..20 {
        let traj: Vec<DVector<f64>> =
            fx.truth.iter().map(|q| q.map(|v| v + rng.random_range(-0.4..0.4))).collect();
        let g = problem.gradient(&traj);
        let h = 1e-6;
        let mut fd = DVector::zeros(g.len());
        for k in 0..g.len() {
            let (t, j) = (k / d, k % d);
            let mut plus = traj.clone();
            plus[t][j] += h;
            let mut minus = traj.clone();
            minus[t][j] -= h;
            fd[k] = (problem.evaluate(&plus).total - problem.evaluate(&minus).total) / (2.0 * h);
        }
        worst_grad = worst_grad.max((&g - &fd).norm() / fd.norm().max(1e-12));
    }

    let mut worst_jac = 0.0f64;
    for _ in 0..20 {
        let q: Vec<f64> = fx.model.mid_configuration().iter().map(|m| m + rng.random_range(-1.0..1.0)).collect();
        let jac = fx.model.jacobian(&q);
        let h = 1e-6;
        for j in 0..d {
            let mut plus = q.clone();
            plus[j] += h;
            let mut minus = q.clone();
            minus[j] -= h;
            let (tp, tm) = (fx.model.fk(&plus), fx.model.fk(&minus));
            let lin = (tp.translation() - tm.translation()) / (2.0 * h);
            let rel: Matrix3<f64> = tp.rotation() * tm.rotation().transpose();
            let ang = rotation_log(&rel) / (2.0 * h);
            for r in 0..3 {
                worst_jac = worst_jac.max((jac[(r, j)] - lin[r]).abs()).max((jac[(r + 3, j)] - ang[r]).abs());
            }
        }
    }
    check(
        worst_grad < 1e-4 && worst_jac < 1e-5,
        format!("trajopt gradient rel err {worst_grad:.1e}, Jacobian abs err {worst_jac:.1e} (20 points each)"),
    )
}

fn occlusion() -> Outcome {
    let fx = fixture(12);
    let (t, n) = (fx.flow.timesteps(), fx.flow.points());
    let total = t * n;
    // Frame 0 stays whole; frames 4 and 8 keep only two grasped points; the
    // rest of the masking budget is spread at random over the other frames.
    let mut hidden = vec![false; total];
    for heavy in [4, 8] {
        for i in 2..n {
            hidden[heavy * n + i] = true;
        }
    }
    let budget = total / 2 - hidden.iter().filter(|v| **v).count();
    let mut rest: Vec<usize> =
        (n..total).filter(|k| k / n != 4 && k / n != 8).collect();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    for &k in &rest[..budget] {
        hidden[k] = true;
    }
    let masked = fx.flow.masked(|t, i| hidden[t * n + i]);
    let fraction = 1.0 - masked.visible_count() as f64 / total as f64;

    let clean = solve(&fx, &fx.flow)?;
    let occluded = solve(&fx, &masked)?;
    let shift = clean.ee_poses.last().unwrap().translation_distance(occluded.ee_poses.last().unwrap());
    let baseline = baseline_rigid_trajectory(&masked, BaselineMode::Rigvid).map_err(|e| e.to_string())?;
    let unreliable = baseline.iter().filter(|f| !f.reliable).count();
    check(
        (fraction - 0.5).abs() < 1e-12 && shift < 0.02 && unreliable >= 1,
        format!("{:.0}% masked, final ee shift {shift:.2e} m, baseline unreliable frames {unreliable}", fraction * 100.0),
    )
}

fn push_trend() -> Outcome {
    let start = Instant::now();
    let mut rng = stage_rng(7, Stage::PushStarts);
    let starts: Vec<Pose2> = (0..20)
        .map(|_| {
            let r = rng.random_range(0.05..0.15);
            let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let theta = rng.random_range(-60f64.to_radians()..60f64.to_radians());
            Pose2::new(r * phi.cos(), r * phi.sin(), theta)
        })
        .collect();
    let goal = Pose2::new(0.0, 0.0, 0.0);
    let mut wins = [0usize; 2];
    for (k, pose) in starts.iter().enumerate() {
        let state = TBlockState::new(*pose);
        let template = state.shape.grid_particles(0.01);
        let flow = straight_flow(&template, pose, &goal, 50).map_err(|e| e.to_string())?;
        let cfg = PlannerConfig {
            seed: k as u64,
            ..PlannerConfig::default()
        };
        for (slot, dynamics) in [Dynamics::Oracle, Dynamics::Heuristic].into_iter().enumerate() {
            let ep = plan_push_episode(&state, &flow, dynamics, &cfg).map_err(|e| e.to_string())?;
            wins[slot] += ep.success as usize;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        wins[0] > wins[1] && wins[0] >= 16 && elapsed < 600.0,
        format!("oracle {}/20, heuristic {}/20, {elapsed:.1} s", wins[0], wins[1]),
    )
}

fn rewards() -> Outcome {
    let g = DoorGeometry::default();
    let mut errs: Vec<f64> = Vec::new();
    let mut s = DoorState::closed(g, Vec3::zeros());
    s.ee_position = s.handle_position();
    errs.push(object_state_reward(&s) - 0.25);
    s.handle_angle = std::f64::consts::FRAC_PI_2;
    s.ee_position = Vec3::new(1e3, 0.0, 0.0);
    errs.push(object_state_reward(&s) - 0.25);
    s.handle_angle = 3.0;
    errs.push(object_state_reward(&s) - 0.25);
    s.hinge_angle = 0.35;
    errs.push(object_state_reward(&s) - 1.0);

    let template = g.particle_template(8, 10);
    let t_end = 100;
    let ctx = FlowRewardContext::new(g.hinge_flow(&template, 0.0, 0.5, t_end).map_err(|e| e.to_string())?, template.clone())
        .map_err(|e| e.to_string())?;
    let at = |hinge: f64, ee: Option<Vec3>| {
        let mut st = DoorState::closed(g, Vec3::new(1e3, 0.0, 0.0));
        st.hinge_angle = hinge;
        if let Some(ee) = ee {
            st.ee_position = ee;
        } else {
            let p = st.particles(&template);
            st.ee_position = p.iter().sum::<Vec3>() / p.len() as f64;
        }
        flow_reward(&st, &ctx).unwrap()
    };
    let end = at(0.5, None);
    errs.push(end.reward - 1.0);
    let initial = at(0.0, Some(Vec3::new(1e3, 0.0, 0.0)));
    errs.push(initial.reward - 0.75 / t_end as f64);
    let half = at(0.25, Some(Vec3::new(1e3, 0.0, 0.0)));
    errs.push(half.particle - 0.75 * half.t_star as f64 / t_end as f64);
    let closed_forms = errs.iter().all(|e| e.abs() <= 1e-9) && (49..=51).contains(&half.t_star);

    let ctx = FlowRewardContext::new(g.hinge_flow(&template, 0.0, 0.5, 50).map_err(|e| e.to_string())?, template)
        .map_err(|e| e.to_string())?;
    let mut start = DoorState::closed(g, Vec3::zeros());
    start.ee_position = start.handle_position() + Vec3::new(0.0, -0.4, 0.0);
    let report = evaluate_scripted_episode(&start, &scripted_opener(&g, 0.5), Some(&ctx), RewardKind::Flow, 200)
        .map_err(|e| e.to_string())?;
    let trace: Vec<f64> = report.steps.iter().map(|s| s.particle_reward.unwrap()).collect();
    let monotone = trace.windows(2).all(|w| w[1] >= w[0]);
    let hinge_deg = report.final_state.hinge_angle.to_degrees();
    check(
        closed_forms && report.success && hinge_deg >= 17.0 && monotone,
        format!(
            "max closed-form err {:.1e}, halfway t* {}, opener success {} at {:.1} deg, r_particle monotone {monotone}",
            errs.iter().fold(0.0f64, |a, e| a.max(e.abs())),
            half.t_star,
            report.success,
            hinge_deg
        ),
    )
}

fn resampling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut pairs, mut bad) = (0usize, 0usize);
    for _ in 0..50 {
        let n = rng.random_range(8..60);
        let mut v = || Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        let (a, b, c, w1, w2) = (v(), v(), v() * 0.3, v() * 5.0, v() * 3.0);
        let poses: Vec<RigidTransform> = (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                let p = a * s + b * s * s + c * (std::f64::consts::PI * s).sin();
                RigidTransform::from_scaled_axis(&(w1 * s + w2 * s * s), p)
            })
            .collect();
        let out = bspline_resample(&poses, DEFAULT_MIN_TRANSLATION, DEFAULT_MIN_ROTATION);
        for pair in out.poses.windows(2) {
            pairs += 1;
            let ok = pair[0].translation_distance(&pair[1]) >= 0.01
                || pair[0].rotation_angle_to(&pair[1]) >= 20f64.to_radians();
            bad += !ok as usize;
        }
    }
    check(bad == 0 && pairs > 0, format!("{pairs} pairs over 50 trajectories, {bad} below both thresholds"))
}

fn objflow(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_objflow"))
        .args(args)
        .env("OBJFLOW_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("objflow {:?}: {}", args, String::from_utf8_lossy(&out.stderr)))
    }
}

fn run_twice(root: &Path, scene: &str, files: &[&str]) -> Result<bool, String> {
    let dir = root.join(scene);
    let d = dir.to_str().unwrap();
    objflow(&["synth", "--scene", scene, "--seed", "3", "--out-dir", d])?;
    let config = dir.join("config.json");
    let c = config.to_str().unwrap();
    for out in ["a", "b"] {
        objflow(&["run", "--config", c, "--output-dir", dir.join(out).to_str().unwrap()])?;
    }
    let read = |out: &str, f: &str| fs::read(dir.join(out).join(f)).map_err(|e| e.to_string());
    for f in files {
        if read("a", f)? != read("b", f)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let common = ["calibration.json", "flow.csv", "flow.json", "movable.json"];
    let push_files: Vec<&str> = common.iter().copied().chain(["episode.json"]).collect();
    let grasp_files: Vec<&str> =
        common.iter().copied().chain(["trajectory.csv", "poses.csv", "trajopt_report.json"]).collect();
    let push_same = run_twice(root, "push", &push_files)?;
    let grasp_same = run_twice(root, "grasp", &grasp_files)?;

    let push = root.join("push");
    objflow(&[
        "run",
        "--config",
        push.join("config.json").to_str().unwrap(),
        "--seed",
        "4",
        "--output-dir",
        push.join("c").to_str().unwrap(),
    ])?;
    let pushes = |out: &str| -> Result<serde_json::Value, String> {
        let v: serde_json::Value =
            serde_json::from_slice(&fs::read(push.join(out).join("episode.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        Ok(v["pushes"].clone())
    };
    let reseeded_differs = pushes("a")? != pushes("c")?;
    check(
        push_same && grasp_same && reseeded_differs,
        format!("push outputs identical {push_same}, grasp outputs identical {grasp_same}, new seed changes pushes {reseeded_differs}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("depth calibration", calibration),
        ("rigid fit", rigid_fit),
        ("flow round trip", round_trip),
        ("gradient checks", gradients),
        ("occlusion robustness", occlusion),
        ("push-T trend", push_trend),
        ("reward closed forms", rewards),
        ("B-spline resampling", resampling),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += outcome.is_err() as usize;
        println!("criterion {}: {tag} {name}: {detail}", k + 1);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
