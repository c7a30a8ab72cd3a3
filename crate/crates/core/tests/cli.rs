use std::path::Path;
use std::process::Command as Proc;

use genmoment::cli::{exit_code, run, Command, ScenarioConfig, REPORT_VERSION};
use genmoment::Error;
use serde_json::{json, Value};

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_genmoment"))
}

fn config(v: Value) -> ScenarioConfig {
    serde_json::from_value(v).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn sphere_polytope_is_the_unit_interval() {
    let out = run(&config(json!({"scenario": "s1-rotation-s2", "command": "polytope", "seed": 7}))).unwrap();
    assert!(out.pass);
    assert_eq!(out.report["report_version"], json!(REPORT_VERSION));
    let r = &out.report["results"][0];
    // Psi = height on the unit sphere: fixed values at the poles
    assert_eq!(r["vertices"], json!([[-1.0], [1.0]]));
    assert_eq!(r["violations"], json!(0));
    assert_eq!(out.files[0].0, "image_s1-rotation-s2.csv");
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = format!("{}/run-", dir.path().display());

    let bad = write(dir.path(), "bad.json", "{\"scenario\": ");
    assert_eq!(bin().args(["--config", &bad]).output().unwrap().status.code(), Some(2));
    let unknown = write(dir.path(), "u.json", r#"{"scenario": "nope", "command": "verify"}"#);
    assert_eq!(bin().args(["--config", &unknown]).output().unwrap().status.code(), Some(2));
    let cmd = write(dir.path(), "c.json", r#"{"scenario": "diag-c2", "command": "fly"}"#);
    assert_eq!(bin().args(["--config", &cmd]).output().unwrap().status.code(), Some(2));
    let param = write(dir.path(), "p.json", r#"{"scenario": "diag-c2", "command": "verify", "params": {"nn": 3}}"#);
    assert_eq!(bin().args(["--config", &param]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().output().unwrap().status.code(), Some(2));

    let ok = write(dir.path(), "ok.json", r#"{"scenario": "s1-rotation-s2", "command": "polytope", "seed": 7}"#);
    assert_eq!(bin().args(["--config", &ok, "--tol", "tol_hull=-1"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["--config", &ok, "--tol", "nope=1"]).output().unwrap().status.code(), Some(2));
    let st = bin().args(["--config", &ok, "--out", &prefix, "--jobs", "2"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(format!("{prefix}report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], json!(true));
    assert!(Path::new(&format!("{prefix}image_s1-rotation-s2.csv")).exists());

    // a negative control run through the binary: unorthogonalized horizontal spaces fail
    let fail = write(
        dir.path(),
        "f.json",
        r#"{"scenario": "diag-c2", "command": "reduce", "params": {"level": -0.5, "n": 5, "choice": "unorthogonalized"}}"#,
    );
    assert_eq!(bin().args(["--config", &fail, "--out", &prefix]).output().unwrap().status.code(), Some(1));
}

#[test]
fn catalog_flag() {
    let out = bin().arg("--catalog").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().any(|s| s["id"] == "calabi-eckmann"));
}

#[test]
fn calabi_eckmann_verify() {
    let out = run(&config(json!({"scenario": "calabi-eckmann", "command": "verify", "params": {"n": 200}}))).unwrap();
    assert!(out.pass);
    let names: Vec<String> = out.report["results"][0]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["check"].as_str().unwrap().to_string())
        .collect();
    for want in ["momentumly_closed", "gradient_identity", "hermitian_triple", "metric_positive", "invariance_metric"] {
        assert!(names.iter().any(|n| n == want), "{want}");
    }
}

#[test]
fn command_and_scenario_validation() {
    let e = run(&config(json!({"scenario": "diag-c2", "command": "verify", "params": {"checks": ["minimal_coupling"]}}))).unwrap_err();
    assert_eq!(exit_code(&e), 2);
    let e = run(&config(json!({"command": "dh"}))).unwrap_err();
    assert_eq!(exit_code(&e), 2);
    let e = run(&config(json!({"scenario": "diag-c2", "command": "quotient"}))).unwrap_err();
    assert_eq!(exit_code(&e), 2);
    let e = run(&config(json!({"scenario": "diag-c2", "command": "dh", "params": {"levels": [-0.5]}}))).unwrap_err();
    assert_eq!(exit_code(&e), 2);
    assert!(ScenarioConfig::from_json(r#"{"command": "verify", "colour": 1}"#).is_err());
    let c = config(json!({"scenario": "diag-c2", "command": "verify", "tolerances": {"eps_num": 0.0}}));
    assert!(matches!(c.tolerances(), Err(Error::Config(_))));
    assert_eq!(exit_code(&Error::SlabTooLarge(0.0)), 1);
    assert_eq!(exit_code(&Error::Internal("x".into())), 3);
}

#[test]
fn check_errors_become_failed_entries() {
    // the level lies outside the moment image
    let out = run(&config(json!({"scenario": "diag-c2", "command": "reduce", "params": {"level": 0.5, "n": 3}}))).unwrap();
    assert!(!out.pass);
    assert!(out.report["results"][0]["error"].as_str().unwrap().contains("exhausted"));
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let cfgs = [
        json!({"scenario": "cp2-weights", "command": "orbit-polytope", "params": {"n_points": 3}, "seed": 4}),
        json!({"scenario": {"id": "cp2-weights", "params": {"offset": -0.5}}, "command": "stratify", "params": {"n": 30, "n_open": 20}, "seed": 4}),
        json!({"scenario": "diag-c2", "command": "reduce", "params": {"level": -0.5, "n": 8}, "seed": 4}),
        json!({"scenario": "s1-rotation-s2", "command": "flow", "params": {"n": 3}, "seed": 4}),
    ];
    for c in cfgs {
        let c = config(c);
        let a = run(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run(&c)).unwrap();
        assert_eq!(a.report_text(), b.report_text(), "{:?}", c.command);
        assert_eq!(a.files, b.files);
        assert!(a.pass, "{:?}: {}", c.command, a.report_text());
    }
}

#[test]
fn every_command_parses() {
    for (name, cmd) in [
        ("verify", Command::Verify),
        ("polytope", Command::Polytope),
        ("orbit-polytope", Command::OrbitPolytope),
        ("flow", Command::Flow),
        ("stratify", Command::Stratify),
        ("kn", Command::Kn),
        ("weights", Command::Weights),
        ("reduce", Command::Reduce),
        ("dh", Command::Dh),
        ("moser", Command::Moser),
        ("quotient", Command::Quotient),
        ("ce", Command::Ce),
    ] {
        assert_eq!(config(json!({"command": name})).command, cmd);
    }
}

#[test]
fn flow_csv_and_psi_xi_function() {
    let out = run(&config(json!({
        "scenario": "s1-rotation-s2",
        "command": "flow",
        "params": {"function": {"psi_xi": [1.0]}, "n": 2}
    })))
    .unwrap();
    assert!(out.pass);
    // -grad of the height ends at the south pole
    let lim = &out.report["results"][0]["trajectories"][0]["limit"];
    assert!((lim[2].as_f64().unwrap() + 1.0).abs() < 1e-6);
    let csv = String::from_utf8(out.files[0].1.clone()).unwrap();
    assert!(csv.starts_with("t,x0,x1,x2,f,grad_norm"));
    let e = run(&config(json!({"scenario": "s1-rotation-s2", "command": "flow", "params": {"function": {"psi_xi": [1.0, 2.0]}}}))).unwrap_err();
    assert_eq!(exit_code(&e), 2);
}
