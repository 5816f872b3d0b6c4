use std::path::Path;
use std::process::{Command, Output};

use sparse_splat::align::{global_align, init_gaussians_from_points, AlignConfig};
use sparse_splat::io::{read_cameras, read_json, read_ply, SceneBundle, SynthSpec};
use sparse_splat::train::TrainLog;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-splat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn write_spec(dir: &Path) -> String {
    let spec = SynthSpec {
        primitives: 25,
        cameras: 3,
        width: 32,
        height: 24,
        focal: 30.0,
        ..SynthSpec::default()
    };
    let path = dir.join("spec.json");
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    s(&path)
}

#[test]
fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bundle = s(&d.join("bundle"));
    ok(&["synth", "--spec", &write_spec(d), "--out", &bundle, "--seed", "3"]);
    let init = s(&d.join("init.ply"));
    ok(&["init", "--bundle", &bundle, "--out", &init]);

    // The CLI cloud matches the library pipeline: one primitive per confident aligned pixel.
    let b = SceneBundle::read(&d.join("bundle")).unwrap();
    let state = global_align(&b.graph, &b.point_maps, &b.pairs, &AlignConfig::default()).unwrap();
    let confident: usize =
        state.reference_points().iter().map(|m| m.confidence.iter().filter(|&&c| c >= 1.0).count()).sum();
    let cloud = read_ply(&d.join("init.ply")).unwrap();
    assert_eq!(cloud.len(), confident);
    assert_eq!(cloud, init_gaussians_from_points(&state.reference_points(), 1.0, 0.0, 0).unwrap());
    let cams = read_cameras(&d.join("init.ply.cameras.json")).unwrap();
    assert_eq!(cams.len(), 3);

    let run_dir = d.join("run");
    ok(&["train", "--bundle", &bundle, "--init", &init, "--out", &s(&run_dir), "--iterations", "1"]);
    let rows = TrainLog::read_csv(&run_dir.join("train_log.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    let config: serde_json::Value = read_json(&run_dir.join("config.json")).unwrap();
    assert_eq!(config["iterations"], 1);

    let renders = d.join("renders");
    ok(&["render", "--cloud", &s(&run_dir.join("cloud.ply")), "--camera", &s(&d.join("bundle/cameras.json")), "--out", &s(&renders)]);
    let report = d.join("eval.json");
    ok(&["eval", "--renders", &s(&renders), "--refs", &s(&d.join("bundle/images")), "--out", &s(&report)]);
    let v: serde_json::Value = read_json(&report).unwrap();
    assert_eq!(v["views"].as_array().unwrap().len(), 3);
    assert!(v["mean_psnr_db"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let bad_spec = d.join("bad.json");
    std::fs::write(&bad_spec, r#"{"cameras": 1, "unknown_key": 3}"#).unwrap();
    let out = run(&["synth", "--spec", &s(&bad_spec), "--out", &s(&d.join("b"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "config");

    let out = run(&["init", "--bundle", &s(&d.join("missing")), "--out", &s(&d.join("x.ply"))]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "data");
    assert!(error_line(&out)["message"].as_str().unwrap().contains("missing"));

    let bundle = s(&d.join("bundle"));
    ok(&["synth", "--spec", &write_spec(d), "--out", &bundle]);
    ok(&["init", "--bundle", &bundle, "--out", &s(&d.join("init.ply"))]);
    let diverging = d.join("diverge.json");
    std::fs::write(&diverging, r#"{"learning_rates": {"sh": 1e308}, "iterations": 20}"#).unwrap();
    let run_dir = d.join("run");
    let out = run(&["train", "--bundle", &bundle, "--init", &s(&d.join("init.ply")), "--config", &s(&diverging), "--out", &s(&run_dir)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_line(&out)["error"], "diverged");
    assert!(run_dir.join("partial.ply").exists());

    let out = run(&["train", "--bundle", &bundle, "--init", &s(&d.join("init.ply")), "--out", &s(&run_dir), "--iterations", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
