use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wgflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_record(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).expect("stderr holds one JSON record")
}

const DIRAC_RUN: &str = r#"{
  "potential": {"eta": -1.0},
  "initial": {"atoms": [[0.0, 1.0]]},
  "method": "jko",
  "tau": 0.005,
  "n": 100,
  "t_end": 1.0,
  "diagnostics": {"evi_sigma": {"pieces": [[-1.0, 1.0, 1.0]]}}
}"#;

#[test]
fn run_writes_outputs_and_final_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", DIRAC_RUN);
    let out = dir.path().join("out");
    let o = wgflow(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).is_empty());
    for f in ["trajectory.csv", "summary.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(
        summary.lines().next().unwrap(),
        "t,energy,step_cost,metric_derivative,evi_residual"
    );
    let last = summary.lines().last().unwrap();
    let energy: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((energy + 1.0 / 3.0).abs() < 0.01, "{energy}");
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "t,i,s_i,X_i");
    assert_eq!(traj.lines().count(), 1 + 201 * 100);
}

#[test]
fn manifest_lists_every_resolved_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "min.json",
        r#"{"potential": {"eta": -1.0}, "initial": {"atoms": [[0.0, 1.0]]}, "tau": 0.05, "n": 10}"#,
    );
    let out = dir.path().join("o");
    let o = wgflow(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "17",
    ]);
    assert!(o.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 17);
    let c = &m["config"];
    for key in [
        "potential",
        "initial",
        "method",
        "tau",
        "n",
        "dt",
        "t_end",
        "inner_tol",
        "inner_max_iters",
        "output_dir",
        "diagnostics",
    ] {
        assert!(c.get(key).is_some(), "missing {key}");
    }
    for key in [
        "energy_identity",
        "evi_sigma",
        "weak_residual",
        "metric_derivative",
    ] {
        assert!(
            c["diagnostics"].get(key).is_some(),
            "missing diagnostics.{key}"
        );
    }
    assert_eq!(c["method"], "jko");
    assert_eq!(c["inner_max_iters"], 10000);
    assert!((c["inner_tol"].as_f64().unwrap() - 1e-9).abs() < 1e-24);
    assert_eq!(c["potential"]["beta"], 0.0);
    assert!(m["diagnostics"]["weak_residual"].as_f64().unwrap() < 5e-2);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", DIRAC_RUN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(wgflow(&[
            "run",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "3"
        ])
        .status
        .success());
    }
    for f in ["trajectory.csv", "summary.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn step_bound_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"potential": {"eta": -1.0}, "initial": {"atoms": [[0.0, 1.0]]}, "tau": 0.1}"#,
    );
    let o = wgflow(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let rec = error_record(&o);
    assert_eq!(rec["error"], "invalid_config");
    assert_eq!(rec["field"], "tau");
    assert!(rec["message"]
        .as_str()
        .unwrap()
        .contains("12*tau*lambda_minus"));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"potential": {"eta": -1.0, "terms": [[1.0, 0.5]]}, "initial": {"atoms": [[0.0, 1.0]]}}"#,
    );
    let o = wgflow(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["field"], "potential");
    let o = wgflow(&["run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inner_solver_failure_exits_3_with_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cap.json",
        r#"{"potential": {"eta": -1.0, "beta": 1.0, "terms": [[0.5, 1.5]]},
            "initial": {"pieces": [[-1.0, 1.0, 1.0]]},
            "tau": 0.05, "n": 40, "inner_max_iters": 1, "inner_tol": 1e-14}"#,
    );
    let o = wgflow(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let rec = error_record(&o);
    assert_eq!(rec["error"], "inner_solver_failure");
    assert_eq!(rec["step"], 0);
}

#[test]
fn exact_method_matches_closed_form_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exact.json",
        r#"{"potential": {"eta": -1.0}, "initial": {"atoms": [[-1.0, 0.5], [1.0, 0.5]]},
            "method": "exact", "tau": 0.25, "n": 8, "t_end": 1.0}"#,
    );
    let out = dir.path().join("e");
    assert!(
        wgflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    for line in traj.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let (t, s, x) = (f[0], f[2], f[3]);
        let x0 = if s < 0.5 { -1.0 } else { 1.0 };
        assert!((x - (x0 + t * (2.0 * s - 1.0))).abs() < 1e-14, "{line}");
    }
}

#[test]
fn particle_method_collapses_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"potential": {"eta": 1.0}, "initial": {"atoms": [[-1.0, 0.5], [1.0, 0.5]]},
            "method": "particles", "dt": 0.01, "t_end": 3.0, "n": 2}"#,
    );
    let out = dir.path().join("p");
    assert!(
        wgflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["diagnostics"]["final_particles"], 1);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "t,i,x_i,m_i");
}

#[test]
fn w2_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d0 = write(dir.path(), "d0.json", r#"{"atoms": [[0.0, 1.0]]}"#);
    let d1 = write(dir.path(), "d1.json", r#"{"atoms": [[1.0, 1.0]]}"#);
    let u = write(dir.path(), "u.json", r#"{"pieces": [[-1.0, 1.0, 1.0]]}"#);
    let run = |a: &str, b: &str| {
        let o = wgflow(&["w2", a, b]);
        assert!(o.status.success());
        stdout(&o).trim().to_string()
    };
    assert_eq!(run(&d0, &d1).parse::<f64>().unwrap(), 1.0);
    assert_eq!(run(&d0, &d0).parse::<f64>().unwrap(), 0.0);
    assert_eq!(run(&d0, &u), "0.577350269190");
    let bad = write(dir.path(), "bad.json", r#"{"atoms": [[0.0, 0.5]]}"#);
    assert_eq!(wgflow(&["w2", &d0, &bad]).status.code(), Some(2));
}

fn parse_ot(text: &str) -> Vec<f64> {
    text.lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn ot_examples() {
    let dir = tempfile::tempdir().unwrap();
    let identity = write(
        dir.path(),
        "id.json",
        r#"{"sources": [{"point": [0.0], "mass": 0.5}, {"point": [1.0], "mass": 0.5}],
            "sinks": [{"point": [0.0], "mass": 0.5}, {"point": [1.0], "mass": 0.5}]}"#,
    );
    let o = wgflow(&["ot", &identity]);
    assert!(o.status.success());
    assert_eq!(parse_ot(&stdout(&o)), vec![0.0, 0.0, 0.0]);

    let swap = write(
        dir.path(),
        "swap.json",
        r#"{"sources": [{"point": [0.0], "mass": 0.5}, {"point": [1.0], "mass": 0.5}],
            "sinks": [{"point": [0.0], "mass": 0.5}, {"point": [1.0], "mass": 0.5}],
            "cost": [[1.0, 0.0], [0.0, 1.0]]}"#,
    );
    let plan = dir.path().join("plan.csv");
    let o = wgflow(&["ot", &swap, "--out", plan.to_str().unwrap()]);
    let v = parse_ot(&stdout(&o));
    assert_eq!(v[0], 0.0);
    assert!(v[2] <= 1e-7);
    assert!(plan.exists());

    let unbalanced = write(
        dir.path(),
        "unb.json",
        r#"{"sources": [{"point": [0.0], "mass": 1.0}], "sinks": [{"point": [1.0], "mass": 0.5}]}"#,
    );
    assert_eq!(wgflow(&["ot", &unbalanced]).status.code(), Some(2));
}

#[test]
fn ot_random_instances_close_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    // fixed pseudo-random 4x4 instance
    let mut state = 12345u64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64)
    };
    let mut sites = |k: usize| {
        let raw: Vec<(f64, f64)> = (0..k).map(|_| (next() * 2.0 - 1.0, 0.1 + next())).collect();
        let total: f64 = raw.iter().map(|r| r.1).sum();
        raw.iter()
            .map(|(p, m)| format!(r#"{{"point": [{p}], "mass": {}}}"#, m / total))
            .collect::<Vec<_>>()
            .join(",")
    };
    let text = format!(r#"{{"sources": [{}], "sinks": [{}]}}"#, sites(4), sites(4));
    let path = write(dir.path(), "r.json", &text);
    let o = wgflow(&["ot", &path]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(parse_ot(&stdout(&o))[2] <= 1e-7);
}

#[test]
fn bad_thread_setting_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_wgflow"))
        .args(["w2", "a", "b"])
        .env("WGFLOW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["field"], "WGFLOW_THREADS");
}
