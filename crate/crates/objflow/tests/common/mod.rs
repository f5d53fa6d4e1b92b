#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn objflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_objflow"))
        .args(args)
        .env("OBJFLOW_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn synth(dir: &Path, scene: &str, seed: u64) -> PathBuf {
    let out = objflow(&["synth", "--scene", scene, "--seed", &seed.to_string(), "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("config.json")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
