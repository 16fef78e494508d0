use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn front_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_front-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const CUBIC_1D: &str = "\
[nonlinearity]
kind = bistable_cubic
theta = 0.25

[grid]
extents = -20,40
dx = 0.2

[initial]
kind = indicator
radius = 3
b = 0.05

[time]
t_final = 60
record_every = 50

[analysis]
lambda = 0.5,0.3
speed_window = 30,60
cone_b = 0.05
cone_delta = 0.035
d_grace = 20
";

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn wave_reports_closed_form_speed_and_writes_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CUBIC_1D);
    let csv = dir.path().join("p.csv");
    let out = front_lab(&["wave", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["kappa_star"].as_f64().unwrap() - 0.5 / 2f64.sqrt()).abs() < 1e-8);
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("t,g,g_prime\n"));
    assert!(text.lines().count() > 100);
}

#[test]
fn missing_config_and_unknown_flag_exit_2() {
    assert_eq!(front_lab(&["simulate"]).status.code(), Some(2));
    let out = front_lab(&["wave", "--config", "x.cfg", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = front_lab(&["wave", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &CUBIC_1D.replace("dx = 0.2", "dx = 0.2\ncolour = red"),
    );
    let out = front_lab(&["wave", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 8") && err.contains("colour"), "{err}");
}

#[test]
fn bad_worker_variable_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_front-lab"))
        .args(["verify", "--suite", "quick"])
        .env("FRONTLAB_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_then_levelset_then_hj() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CUBIC_1D);
    let run = dir.path().join("run");
    let out = front_lab(&["simulate", "--config", &cfg, "--out", run.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = json(&out);
    let rel = summary["analysis"]["front_speed"]["relative_error"]
        .as_f64()
        .unwrap();
    assert!(rel < 0.05, "{rel}");
    assert_eq!(summary["analysis"]["cone"]["pass"], Value::Bool(true));

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let snaps = manifest["snapshots"].as_array().unwrap();
    assert!(snaps.len() > 10);
    assert!(run.join(snaps[3]["file"].as_str().unwrap()).exists());

    let graphs = dir.path().join("graphs");
    let out = front_lab(&[
        "levelset",
        "--run",
        run.to_str().unwrap(),
        "--out",
        graphs.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let g = json(&out);
    assert_eq!(g["graphs"].as_array().unwrap().len(), 2);
    let graph = graphs.join("time_graph_lambda_0.5.csv");
    assert!(graph.exists());
    assert!(graphs.join("time_graph_lambda_0.5.csv.json").exists());

    // Forward value ahead of the front, on the sampled boundary.
    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "20,60\n").unwrap();
    let boundary = format!("graph:{}", graph.display());
    let out = front_lab(&[
        "hj",
        "eval",
        "--mode",
        "forward",
        "--boundary",
        &boundary,
        "--config",
        &cfg,
        "--points",
        pts.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.last(), Some(&"ok"));
    let value: f64 = row[2].parse().unwrap();
    assert!(value > 0.0 && value.is_finite());
}

const PLANAR_2D: &str = "\
[nonlinearity]
kind = bistable_cubic
theta = 0.25

[grid]
extents = -10,10;-10,10
dx = 0.5

[initial]
kind = planar
angle = 1.5707963267948966
offset = 2

[time]
t_final = 4
record_every = 100
";

#[test]
fn levelset_space_graph_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), PLANAR_2D);
    let run = dir.path().join("run");
    assert_eq!(
        front_lab(&["simulate", "--config", &cfg, "--out", run.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let last = manifest["snapshots"]
        .as_array()
        .unwrap()
        .last()
        .unwrap()
        .clone();
    let snap = run.join(last["file"].as_str().unwrap());
    let out_dir = dir.path().join("space");
    let out = front_lab(&[
        "levelset",
        "--snapshot",
        snap.to_str().unwrap(),
        "--axis",
        "1",
        "--lambda",
        "0.5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let g = json(&out);
    assert_eq!(g["graphs"][0]["valid"].as_u64(), Some(41));
    // A flat front stays flat.
    assert!(g["graphs"][0]["lipschitz"].as_f64().unwrap() < 1e-6);
    let text = std::fs::read_to_string(out_dir.join("space_graph_axis1_lambda_0.5.csv")).unwrap();
    let h: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    // The front started at y = 2 and moved down at roughly the wave speed.
    let t = last["time"].as_f64().unwrap();
    assert!((h - (2.0 - 0.5 / 2f64.sqrt() * t)).abs() < 0.3, "{h}");
}

#[test]
fn hj_planar_modes_and_characteristic() {
    let dir = tempfile::tempdir().unwrap();
    let ks = 0.5 / 2f64.sqrt();
    let b = 1.0 / 2f64.sqrt();
    let params = format!("{ks},{b},{b}");
    let xi = format!("planar:{}", 1.0 / ks);
    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "# x, t\n0.5,3\n-1,0.5\n").unwrap();
    let out_csv = dir.path().join("v.csv");
    let out = front_lab(&[
        "hj",
        "eval",
        "--mode",
        "forward",
        "--boundary",
        &xi,
        "--params",
        &params,
        "--points",
        pts.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    for line in text.lines().skip(1) {
        let cells: Vec<f64> = line
            .split(',')
            .take(3)
            .map(|c| c.parse().unwrap())
            .collect();
        let expected = ks * (cells[1] - cells[0] / ks);
        assert!((cells[2] - expected).abs() < 1e-8, "{line}");
    }

    let out = front_lab(&[
        "hj",
        "characteristic",
        "--boundary",
        &xi,
        "--params",
        &params,
        "--x0",
        "0",
        "--t0",
        "1",
        "--p0",
        "-1",
        "--value",
        &ks.to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let c = json(&out);
    assert!((c["hit_time"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert!((c["hit_point"][0].as_f64().unwrap() - 0.282_842_712_474_619).abs() < 1e-12);
}

#[test]
fn verify_quick_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let out = front_lab(&[
        "verify",
        "--suite",
        "quick",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert_eq!(report["pass"], Value::Bool(true));
    assert_eq!(report["criteria"].as_array().unwrap().len(), 10);
    assert!(report_path.exists());
}
