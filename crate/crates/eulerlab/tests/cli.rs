use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eulerlab::runner::sha256_hex;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eulerlab"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_scenario(sub: &str, path: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.arg(sub).arg("--scenario").arg(path).arg("--out").arg(out).args(extra);
    cmd.output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn single_vortex_scenario_writes_hashed_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = run_scenario("vortices", &scenario("disk_single_vortex.json"), &out, &[]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for f in files {
        let bytes = fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    let period = m["diagnostics"]["first_revolution_time"][0].as_f64().unwrap();
    assert!((period - 1.5 * std::f64::consts::PI).abs() < 1e-6, "{period}");
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,vortex,x,y\r\n0,0,0.5,0\r\n"));
    assert_eq!(m["scenario"]["input"]["name"], "disk_single_vortex");
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn malformed_json_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ \"name\": \"x\", ").unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run_scenario("run", &bad, &out, &[]).status.code(), Some(2));
    assert!(!out.exists());
    // unknown fields and schema violations
    fs::write(&bad, r#"{"name": "x", "task": {"kind": "vortices", "positions": [[0.1, 0]], "strengths": [1], "t_end": 1, "bogus": 1}}"#).unwrap();
    assert_eq!(run_scenario("run", &bad, &out, &[]).status.code(), Some(2));
    // a vortex task without a domain
    fs::write(&bad, r#"{"name": "x", "task": {"kind": "vortices", "positions": [[0.1, 0]], "strengths": [1], "t_end": 1}}"#).unwrap();
    assert_eq!(run_scenario("run", &bad, &out, &[]).status.code(), Some(2));
    // a vortex outside the domain
    fs::write(&bad, r#"{"name": "x", "domain": {"kind": "disk", "R": 1}, "task": {"kind": "vortices", "positions": [[1.5, 0]], "strengths": [1], "t_end": 1}}"#).unwrap();
    assert_eq!(run_scenario("run", &bad, &out, &[]).status.code(), Some(2));
    assert!(!out.exists());
    // subcommand and task disagree
    assert_eq!(run_scenario("flow", &scenario("disk_single_vortex.json"), &out, &[]).status.code(), Some(2));
    assert_eq!(run_scenario("run", &scenario("disk_single_vortex.json"), &out, &["--tol", "-1"]).status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(run(&["vortices"]).status.code(), Some(2));
}

#[test]
fn near_collision_exits_4_with_event_time() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run_scenario("vortices", &scenario("near_collision.json"), tmp.path(), &[]);
    assert_eq!(r.status.code(), Some(4));
    let m = manifest(tmp.path());
    assert_eq!(m["status"], "early_termination");
    assert_eq!(m["event"]["kind"], "collision");
    let t = m["event"]["t"].as_f64().unwrap();
    assert!(t > 0.0 && t < 0.01);
    assert!(tmp.path().join("trajectory.csv").exists());
}

#[test]
fn numerical_failure_exits_3_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("mfs_jets.json");
    fs::write(
        &s,
        r#"{"name": "mfs_jets", "domain": {"kind": "disk", "R": 1}, "green": {"force_mfs": true},
            "task": {"kind": "jets", "positions": [[0.5, 0]], "strengths": [6.283185307179586]}}"#,
    )
    .unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run_scenario("jets", &s, &out, &[]).status.code(), Some(3));
    let m = manifest(&out);
    assert_eq!(m["status"], "numerical_failure");
    assert_eq!(m["error"]["kind"], "unsupported");
    assert!(m["files"].as_array().unwrap().is_empty());
}

#[test]
fn identical_inputs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["annulus_green.json", "radial_patch_flow_map.json", "three_vortices_disk.json"] {
        let (a, b) = (tmp.path().join(format!("a_{name}")), tmp.path().join(format!("b_{name}")));
        assert_eq!(run_scenario("run", &scenario(name), &a, &[]).status.code(), Some(0));
        assert_eq!(run_scenario("run", &scenario(name), &b, &[]).status.code(), Some(0));
        let (ma, mb) = (manifest(&a), manifest(&b));
        assert_eq!(ma["files"], mb["files"], "{name}");
    }
    // a different seed changes the sampled pairs
    let c = tmp.path().join("c");
    assert_eq!(run_scenario("green", &scenario("annulus_green.json"), &c, &["--seed", "8"]).status.code(), Some(0));
    let a = tmp.path().join("a_annulus_green.json");
    assert_ne!(fs::read(a.join("green.csv")).unwrap(), fs::read(c.join("green.csv")).unwrap());
    assert_eq!(manifest(&c)["seed"], 8);
}

#[test]
fn several_scenarios_run_into_subdirectories() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("batch");
    let r = bin()
        .env("EULERLAB_WORKERS", "2")
        .arg("run")
        .arg("--scenario")
        .arg(scenario("hlog_gamma.json"))
        .arg("--scenario")
        .arg(scenario("near_collision.json"))
        .arg("--scenario")
        .arg(scenario("dini_potential.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    // the worst exit code wins
    assert_eq!(r.status.code(), Some(4));
    for name in ["hlog_gamma", "near_collision", "dini_potential"] {
        let m = manifest(&out.join(name));
        assert_eq!(m["name"], name);
        assert_eq!(m["workers"], 2);
    }
}

#[test]
fn every_shipped_scenario_parses() {
    for entry in fs::read_dir(scenario("")).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let s = eulerlab::scenario::Scenario::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(path.file_stem().unwrap().to_str().unwrap(), s.name);
    }
}

#[test]
fn selfcheck_reports_and_fault_injection() {
    let r = run(&["selfcheck"]);
    assert_eq!(r.status.code(), Some(0));
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS ")).count() >= 10, "{text}");
    let r = run(&["selfcheck", "--annulus-terms", "1"]);
    assert_ne!(r.status.code(), Some(0));
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("FAIL period_matrix"), "{text}");
    let r = run(&["selfcheck", "--disk-only"]);
    assert_eq!(r.status.code(), Some(0));
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("SKIP period_matrix") && !text.contains("FAIL"), "{text}");
}
