mod common;

use std::fs;
use std::path::Path;

use common::{code, objflow, s, stdout, synth};
use objflow::manifest::{sha256_hex, RunManifest, RunStatus};

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn edit_config(path: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    f(&mut v);
    fs::write(path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
}

#[test]
fn validate_accepts_synthetic_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "push", 1);
    let out = objflow(&["validate", s(&tmp.path().join("bundle/bundle.json"))]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "ok");
}

#[test]
fn validate_lists_every_violation() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "push", 1);
    let bundle = tmp.path().join("bundle");
    let depth = bundle.join("depth/0003.d2fd");
    let mut bytes = fs::read(&depth).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    fs::write(&depth, bytes).unwrap();
    let tracks = bundle.join("tracks.csv");
    let text = fs::read_to_string(&tracks).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| l.starts_with("2,5,")).unwrap();
    lines[row] = "2,5,-3,10,1".into();
    fs::write(&tracks, lines.join("\n") + "\n").unwrap();

    let out = objflow(&["validate", s(&bundle.join("bundle.json"))]);
    assert_eq!(code(&out), 2);
    let text = stdout(&out);
    assert!(text.contains(&format!("bad magic at {}", depth.display())), "{text}");
    assert!(text.contains("visible track (t=2, i=5) at pixel (-3, 10)"), "{text}");
    assert!(text.contains("2 violation(s)"), "{text}");
}

#[test]
fn missing_input_fails_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "push", 1);
    let missing = tmp.path().join("bundle/ref_depth.d2fd");
    fs::remove_file(&missing).unwrap();
    let out = objflow(&["run", "--config", s(&config)]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&missing.display().to_string()), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn run_records_every_output_in_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "grasp", 4);
    let out = objflow(&["run", "--config", s(&config)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    let m = manifest(&dir);
    assert_eq!(m.status, RunStatus::Completed);
    let names: Vec<&str> = m.stages.iter().map(|st| st.name.as_str()).collect();
    assert_eq!(names, ["calibrate", "lift", "filter-movable", "trajopt"]);
    let mut on_disk: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = m.outputs.iter().map(|o| o.path.clone()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    for o in &m.outputs {
        assert_eq!(o.sha256, sha256_hex(&fs::read(dir.join(&o.path)).unwrap()));
    }
    assert!(m.inputs.keys().any(|k| k.ends_with("grasps.json")));
    assert!(m.inputs.keys().any(|k| k.ends_with("0011.d2fd")));
    assert_eq!(m.config["seed"], 4);
}

#[test]
fn subcommands_reproduce_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = synth(root, "grasp", 2);
    assert_eq!(code(&objflow(&["run", "--config", s(&config)])), 0);
    let bundle = root.join("bundle/bundle.json");
    let step = root.join("steps");
    fs::create_dir_all(&step).unwrap();
    let p = |n: &str| step.join(n);

    let out = objflow(&["calibrate", "--bundle", s(&bundle), "--out", s(&p("calibration.json"))]);
    assert_eq!(code(&out), 0);
    let line = stdout(&out);
    let scale: f64 = line.trim_start_matches("s=").split(' ').next().unwrap().parse().unwrap();
    assert!((scale - 0.8).abs() < 1e-6, "{line}");
    assert_eq!(
        code(&objflow(&[
            "lift",
            "--bundle",
            s(&bundle),
            "--calibration",
            s(&p("calibration.json")),
            "--out",
            s(&p("flow.csv"))
        ])),
        0
    );
    assert_eq!(code(&objflow(&["filter-movable", "--bundle", s(&bundle), "--out", s(&p("movable.json"))])), 0);
    let out = objflow(&[
        "plan-traj",
        "--flow",
        s(&p("flow.csv")),
        "--movable",
        s(&p("movable.json")),
        "--grasps",
        s(&root.join("grasps.json")),
        "--robot",
        s(&root.join("robot.json")),
        "--q0",
        "0.1,-0.3,0.05,-2.0,0.05,1.8,0.7",
        "--grasp-radius",
        "0.08",
        "--out-dir",
        s(&step),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("converged=true"));
    for f in ["calibration.json", "flow.csv", "flow.json", "movable.json", "trajectory.csv", "poses.csv", "trajopt_report.json"] {
        assert_eq!(fs::read(p(f)).unwrap(), fs::read(root.join("out").join(f)).unwrap(), "{f} differs");
    }

    let out = objflow(&[
        "fit-rigid",
        "--flow",
        s(&p("flow.csv")),
        "--movable",
        s(&p("movable.json")),
        "--out",
        s(&p("rigid.json")),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("frames=12 unreliable=0"), "{}", stdout(&out));
}

#[test]
fn pusht_subcommand_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = synth(root, "push", 5);
    assert_eq!(code(&objflow(&["run", "--config", s(&config)])), 0);
    let cfg: serde_json::Value = serde_json::from_slice(&fs::read(&config).unwrap()).unwrap();
    let start: Vec<String> = cfg["planner"]["start"].as_array().unwrap().iter().map(|v| v.to_string()).collect();
    let episode = root.join("episode.json");
    let out = objflow(&[
        "pusht",
        "--flow",
        s(&root.join("out/flow.csv")),
        "--movable",
        s(&root.join("out/movable.json")),
        "--start",
        &start.join(","),
        "--seed",
        "5",
        "--out",
        s(&episode),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let line = stdout(&out);
    assert!(line.starts_with("success=true pushes="), "{line}");
    assert_eq!(fs::read(&episode).unwrap(), fs::read(root.join("out/episode.json")).unwrap());
}

#[test]
fn door_eval_subcommand_opens_the_door() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = synth(root, "door", 0);
    assert_eq!(code(&objflow(&["run", "--config", s(&config)])), 0);
    let f = objflow::synth::door_frame();
    let t = f.translation();
    let q = f.quaternion_wxyz();
    let frame = format!("{},{},{},{},{},{},{}", t.x, t.y, t.z, q[0], q[1], q[2], q[3]);
    let out = objflow(&[
        "door-eval",
        "--flow",
        s(&root.join("out/flow.csv")),
        "--movable",
        s(&root.join("out/movable.json")),
        "--door-frame",
        &frame,
        "--out-dir",
        s(&root.join("eval")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("success=true"), "{}", stdout(&out));
    assert!(stdout(&out).contains("particle_reward_monotone=true"));
    let trace = fs::read_to_string(root.join("eval/reward_trace.csv")).unwrap();
    assert!(trace.starts_with("step,reward,t_star,theta_hinge\n"));
    assert_eq!(trace.lines().count(), 201);
}

#[test]
fn list_flags_check_their_length() {
    let tmp = tempfile::tempdir().unwrap();
    let out = objflow(&[
        "pusht",
        "--flow",
        s(&tmp.path().join("flow.csv")),
        "--start",
        "0.1,-0.2",
        "--seed",
        "1",
        "--out",
        s(&tmp.path().join("e.json")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--start takes 3 comma-separated values, got 2"));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "door", 0);
    edit_config(&config, |v| v["planner"]["speed"] = 3.into());
    let out = objflow(&["run", "--config", s(&config)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field `speed`"));
}

#[test]
fn seed_can_come_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "door", 0);
    edit_config(&config, |v| {
        v.as_object_mut().unwrap().remove("seed");
    });
    assert_eq!(code(&objflow(&["run", "--config", s(&config)])), 2);
    let out = objflow(&["run", "--config", s(&config), "--seed", "17"]);
    assert_eq!(code(&out), 0);
    assert_eq!(manifest(&tmp.path().join("out")).config["seed"], 17);
}

#[test]
fn stage_error_keeps_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = synth(root, "grasp", 0);
    // Keep only the decoy grasp, which is too far from every movable point.
    let grasps = root.join("grasps.json");
    let mut g: serde_json::Value = serde_json::from_slice(&fs::read(&grasps).unwrap()).unwrap();
    g["candidates"].as_array_mut().unwrap().remove(0);
    fs::write(&grasps, serde_json::to_vec(&g).unwrap()).unwrap();
    let out = objflow(&["run", "--config", s(&config)]);
    assert_eq!(code(&out), 3);
    let m = manifest(&root.join("out"));
    assert_eq!(m.status, RunStatus::Failed);
    let failure = m.failure.as_ref().unwrap();
    assert_eq!((failure.stage.as_str(), failure.kind.as_str()), ("trajopt", "invalid_input"));
    assert_eq!(m.stages.len(), 3);
    for f in ["calibration.json", "flow.csv", "movable.json"] {
        assert!(root.join("out").join(f).exists());
        assert!(m.output_hash(f).is_some());
    }
}

#[test]
fn calibration_failure_is_a_stage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = synth(root, "push", 0);
    let depth = root.join("bundle/depth/0000.d2fd");
    let map = objflow::formats::read_depth(&depth).unwrap();
    let flat = objflow_core::depthflow::DepthMap::filled(map.width, map.height, 1.0);
    objflow::formats::write_depth(&depth, &flat).unwrap();
    let out = objflow(&["run", "--config", s(&config)]);
    assert_eq!(code(&out), 3);
    let failure = manifest(&root.join("out")).failure.unwrap();
    assert_eq!((failure.stage.as_str(), failure.kind.as_str()), ("calibrate", "rank_deficient"));
}

#[test]
fn non_convergence_exits_with_code_4() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "grasp", 0);
    edit_config(&config, |v| v["planner"]["max_iterations"] = 1.into());
    let out = objflow(&["run", "--config", s(&config)]);
    assert_eq!(code(&out), 4);
    let m = manifest(&tmp.path().join("out"));
    assert_eq!(m.status, RunStatus::NotConverged);
    assert!(m.output_hash("trajectory.csv").is_some());
}
