use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbm")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const DECAY: &str = r#"{"experiment": "decay", "model": {"builder": "asymmetric_atlas", "d": 5, "p": 0.75},
    "start": {"policy": "ones"}, "burn_in": {"t_burn": 5}, "t_grid": [1, 2, 4], "h": 0.01,
    "n_reps": 16, "zero_arm": true, "d_prime": 2, "seed": 3}"#;

#[test]
fn missing_config_exits_2() {
    let out = rbm(&["check", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/cfg.json"));
}

#[test]
fn bad_fields_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"experiment": "decay", "model": {"builder": "symmetric_atlas", "d": 3}, "t_grid": [1, "x"]}"#, "t_grid[1]"),
        (
            r#"{"experiment": "decay", "model": {"builder": "symmetric_atlas", "d": 3},
               "start": {"policy": "fixed", "x": [1, -1, 2]}, "t_grid": [1]}"#,
            "start.x[1]",
        ),
        (r#"{"experiment": "decay", "model": {"builder": "symmetric_atlas", "d": 3}, "t_grid": [1], "h": -1}"#, "h"),
        (r#"{"experiment": "decay", "model": {"builder": "symmetric_atlas", "d": 3}, "t_grid": [1], "bogus": 1}"#, "bogus"),
    ];
    for (k, (text, field)) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{k}.json"), text);
        let out = rbm(&["simulate", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "case {k}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("`{field}`")), "case {k}: {err}");
    }
}

#[test]
fn unstable_model_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "up.json",
        r#"{"experiment": "assumption_check", "model": {"builder": "inline",
            "spec": {"d": 1, "mu": [1.0], "P": [[0.0]], "sigma": [[1.0]], "label": "drift up"}}}"#,
    );
    assert_eq!(rbm(&["check", "--config", &cfg]).status.code(), Some(3));
}

#[test]
fn repeated_runs_are_byte_identical_and_leave_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "decay.json", DECAY);
    let outs: Vec<_> = ["a.csv", "b.csv"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let status = rbm(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap()]).status;
            assert!(status.success());
            out
        })
        .collect();
    let (a, b) = (std::fs::read(&outs[0]).unwrap(), std::fs::read(&outs[1]).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let header = String::from_utf8_lossy(&a).lines().next().unwrap().to_string();
    assert_eq!(header, "t,metric,mean,stderr,n_effective,model,d,seed");

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.manifest.json")).unwrap()).unwrap();
    for key in ["config", "version", "wall_time_seconds", "seed", "workers"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(manifest["config"]["n_reps"], 16);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "decay.json", DECAY);
    let a = rbm(&["experiment", "--config", &cfg, "--seed", "3"]).stdout;
    let b = rbm(&["experiment", "--config", &cfg, "--seed", "4"]).stdout;
    let c = rbm(&["experiment", "--config", &cfg]).stdout;
    assert_eq!(a, c);
    assert_ne!(a, b);
}

#[test]
fn check_reports_all_assumptions_on_asymmetric_atlas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "check.json",
        r#"{"experiment": "assumption_check", "model": {"builder": "asymmetric_atlas", "d": 10, "p": 0.75}}"#,
    );
    let out = rbm(&["check", "--config", &cfg]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["holds_I", "holds_II", "holds_III", "holds_IV"] {
        assert_eq!(report[key]["holds"], Value::Bool(true), "{key} in {report}");
    }
    assert_eq!(report["holds"], Value::Bool(true));
}

#[test]
fn derivative_writes_all_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "der.json",
        r#"{"experiment": "derivative_validation", "model": {"builder": "symmetric_atlas", "d": 4},
            "h": 0.001, "n_reps": 1, "seed": 5}"#,
    );
    let out = rbm(&["derivative", "--config", &cfg, "--i0", "2", "--n-walk", "500"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["S", "w0", "wdp1", "finite_diff", "exclusionRate"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let s: Vec<f64> = serde_json::from_value(v["S"].clone()).unwrap();
    assert_eq!(s.len(), 4);
    let mass = s.iter().sum::<f64>() + v["w0"].as_f64().unwrap() + v["wdp1"].as_f64().unwrap();
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_and_couple_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"experiment": "decay", "model": {"builder": "symmetric_atlas", "d": 3},
            "start": {"policy": "ones"}, "t_grid": [1], "h": 0.01, "seed": 2}"#,
    );
    let sim = rbm(&["simulate", "--config", &cfg]);
    assert!(sim.status.success());
    let text = String::from_utf8(sim.stdout).unwrap();
    assert!(text.starts_with("step,t,i,X,L"));
    assert_eq!(text.lines().count(), 1 + 101 * 3);

    let cpl = rbm(&["couple", "--config", &cfg, "--horizon", "0.5"]);
    assert!(cpl.status.success(), "{}", String::from_utf8_lossy(&cpl.stderr));
    assert!(String::from_utf8(cpl.stdout).unwrap().lines().count() > 1);
}
