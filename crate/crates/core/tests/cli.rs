mod common;

use std::path::Path;
use std::process::Command;

use common::model_path;

fn tspdc(args: &[&str], out: &Path) -> (i32, String) {
    let res = Command::new(env!("CARGO_BIN_EXE_tspdc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (res.status.code().unwrap_or(-1), String::from_utf8_lossy(&res.stderr).into_owned())
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn vertices_of_the_two_rule_slice() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = tspdc(&["vertices", "--phi", "-1,1"], dir.path());
    assert_eq!(code, 0);
    let rows: Vec<Vec<f64>> = read(&dir.path().join("vertices.csv"))
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    // one vertex per column: (1, -1) and (-1, 1)
    assert_eq!(rows, vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    assert!(read(&dir.path().join("manifest.json")).contains("\"command\": \"vertices\""));
}

#[test]
fn synth_writes_certificate_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path("ex1_parametric.json");
    let (code, err) = tspdc(&["synth", &model, "--set", "a=5", "--set", "b=1.5"], dir.path());
    assert_eq!(code, 0, "{err}");
    let cert: serde_json::Value = serde_json::from_str(&read(&dir.path().join("certificate.json"))).unwrap();
    assert_eq!(cert["mode"], "proposed");
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    let sha = manifest["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(sha, tspdc::io::sha256_hex(&std::fs::read(&model).unwrap()));
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["timings"]["total_s"].is_number());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = tspdc(&["synth", "no/such/model.json"], dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("usage error"));
    assert_eq!(tspdc(&["synth"], dir.path()).0, 2);
    assert_eq!(tspdc(&["frobnicate"], dir.path()).0, 2);
    let model = model_path("ex1_parametric.json");
    assert_eq!(tspdc(&["synth", &model, "--set", "nosuchkey.x=1"], dir.path()).0, 2);
    assert_eq!(tspdc(&["synth", &model, "--set", "a=0", "--set", "b=2"], dir.path()).0, 1);
}

#[test]
fn local_certificate_round_trips_through_every_consumer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = model_path("ex2_local.json");
    let (code, err) = tspdc(&["synth-local", &model], &d.join("synth"));
    assert_eq!(code, 0, "{err}");
    let cert = d.join("synth/certificate_local.json");
    let cert = cert.to_str().unwrap();
    let (code, err) = tspdc(&["simulate", &model, "--cert", cert, "--x0", "0.5,-1", "--x0", "-1,1", "--t-end", "5"], &d.join("sim"));
    assert_eq!(code, 0, "{err}");
    assert!(d.join("sim/trajectory_001.csv").exists());
    let (code, err) = tspdc(&["doa", &model, "--cert", cert, "--resolution", "41", "--trajectories", "2", "--t-end", "5"], &d.join("doa"));
    assert_eq!(code, 0, "{err}");
    assert!(read(&d.join("doa/doa.svg")).contains("</svg>"));
    let (code, err) = tspdc(&["verify", &model, "--cert", cert], &d.join("verify"));
    assert_eq!(code, 0, "{err}");
    let rep: serde_json::Value = serde_json::from_str(&read(&d.join("verify/verification.json"))).unwrap();
    assert_eq!(rep["passed"], true);
}

#[test]
fn baseline_local_design_and_published_gains_load() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = model_path("ex2_local.json");
    let (code, err) = tspdc(&["synth-local", &model, "--baseline"], d);
    assert_eq!(code, 0, "{err}");
    let cert: serde_json::Value = serde_json::from_str(&read(&d.join("certificate_baseline.json"))).unwrap();
    assert_eq!(cert["mode"], "traditional_pdc");
    let published = model_path("ex2_published.json");
    let (code, err) = tspdc(&["simulate", &model, "--cert", &published, "--x0", "0.5,0.5", "--t-end", "5"], &d.join("pub"));
    assert_eq!(code, 0, "{err}");
    assert!(read(&d.join("pub/simulation.json")).contains("asymmetric"));
}

#[test]
fn csv_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ex1 = model_path("ex1_parametric.json");
    let ex2 = model_path("ex2_local.json");
    for run in ["a", "b"] {
        assert_eq!(tspdc(&["sweep", &ex1, "--grid", "3x2", "--samples", "50"], &d.join(run)).0, 0);
        assert_eq!(tspdc(&["synth-local", &ex2], &d.join(run)).0, 0);
        let cert = d.join(run).join("certificate_local.json");
        let c = cert.to_str().unwrap();
        assert_eq!(tspdc(&["doa", &ex2, "--cert", c, "--resolution", "31", "--trajectories", "0"], &d.join(run)).0, 0);
        assert_eq!(tspdc(&["simulate", &ex2, "--cert", c, "--x0", "1,1", "--t-end", "2"], &d.join(run)).0, 0);
    }
    for name in ["sweep.csv", "nesting.csv", "doa_grid.csv", "doa_boundary.csv", "trajectory_000.csv"] {
        assert_eq!(read(&d.join("a").join(name)), read(&d.join("b").join(name)), "{name}");
    }
    let sweep = read(&d.join("a/sweep.csv"));
    assert_eq!(sweep.lines().count(), 1 + 3 * 2 * 3);
    assert!(sweep.starts_with("a,b,mode,feasible"));
}
