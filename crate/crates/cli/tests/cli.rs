use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_crossdiff")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn invoke(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(bin())
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

fn demo(n: usize, t_end: f64) -> Value {
    json!({
        "grid": {"x_min": -4.0, "x_max": 4.0, "n_cells": n, "boundary": "periodic"},
        "model": {"preset": "demo", "epsilon": 0.01},
        "initial": {"kind": "two-bump-mixed", "separation": 2.0, "width": 0.5, "height": 1.0, "mix": 0.7},
        "solver": {"t_end": t_end, "snapshot_interval": t_end / 4.0}
    })
}

#[test]
fn zero_initial_data_writes_zero_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo(32, 0.1);
    cfg["initial"] = json!({"kind": "zero"});
    let c = write_config(dir.path(), "zero.json", &cfg);
    let out = dir.path().join("out");
    let o = invoke("run", &c, &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,u,v,s"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5 * 32);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(&f[2..], ["0.0", "0.0", "0.0"]);
    }
    assert!(!text.contains('\r'));
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["exit_code"], 0);
    for f in [
        "trajectory.csv",
        "diagnostics.csv",
        "summary.json",
        "profile.svg",
    ] {
        assert!(
            m["outputs"].as_array().unwrap().iter().any(|v| v == f),
            "{f}"
        );
    }
}

#[test]
fn oversized_cfl_exits_with_stability_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo(128, 0.5);
    cfg["solver"]["cfl"] = json!(50.0);
    cfg["solver"]["allow_unstable_cfl"] = json!(true);
    let c = write_config(dir.path(), "unstable.json", &cfg);
    let out = dir.path().join("out");
    let o = invoke("run", &c, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m["error"]["kind"], "StabilityError");
    assert_eq!(m["status"], "error");
}

#[test]
fn schema_errors_exit_3_and_list_every_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo(64, 0.1);
    cfg["model"]["pressure"] = json!({"alpha": 0});
    cfg["grid"]["spacing"] = json!(0.1);
    cfg["sweep"] = json!({"eps_ladder": [0.1, 0.2, 0.01]});
    let c = write_config(dir.path(), "bad.json", &cfg);
    let out = dir.path().join("out");
    let o = invoke("run", &c, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("model.pressure.alpha"), "{err}");
    assert!(err.contains("grid.spacing"), "{err}");
    let m = manifest(&out);
    assert_eq!(m["error"]["kind"], "SchemaError");
    assert!(m["config_hash"].is_null());

    let mut cfg = demo(64, 0.1);
    cfg["sweep"] = json!({"eps_ladder": [0.1, 0.2, 0.01]});
    let c = write_config(dir.path(), "ladder.json", &cfg);
    let o = invoke("sweep", &c, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.eps_ladder"));

    let o = invoke("run", &dir.path().join("missing.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn reruns_are_byte_identical_and_hash_tracks_meaning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo(64, 0.1);
    let c1 = write_config(dir.path(), "a.json", &cfg);
    std::fs::write(
        dir.path().join("b.json"),
        serde_json::to_string(&cfg).unwrap(),
    )
    .unwrap();
    let c2 = dir.path().join("b.json");
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    assert_eq!(
        invoke("run", &c1, &o1, &["--threads", "1"]).status.code(),
        Some(0)
    );
    assert_eq!(
        invoke("run", &c2, &o2, &["--threads", "3"]).status.code(),
        Some(0)
    );
    for f in [
        "trajectory.csv",
        "diagnostics.csv",
        "summary.json",
        "profile.svg",
    ] {
        assert_eq!(
            std::fs::read(o1.join(f)).unwrap(),
            std::fs::read(o2.join(f)).unwrap(),
            "{f}"
        );
    }
    let h1 = manifest(&o1)["config_hash"].clone();
    assert_eq!(h1, manifest(&o2)["config_hash"]);

    let mut changed = cfg.clone();
    changed["model"]["epsilon"] = json!(0.02);
    let c3 = write_config(dir.path(), "c.json", &changed);
    let o3 = dir.path().join("o3");
    assert_eq!(invoke("run", &c3, &o3, &[]).status.code(), Some(0));
    assert_ne!(h1, manifest(&o3)["config_hash"]);
}

#[test]
fn format_flag_and_per_snapshot_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo(32, 0.1);
    cfg["outputs"] = json!({"csv_layout": "per-snapshot"});
    let c = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("out");
    assert_eq!(
        invoke("run", &c, &out, &["--format", "csv"]).status.code(),
        Some(0)
    );
    assert!(out.join("snapshots/snapshot_00000.csv").is_file());
    assert!(out.join("snapshots/snapshot_00004.csv").is_file());
    assert!(!out.join("summary.json").exists());
    assert!(!out.join("profile.svg").exists());
}

#[test]
fn heat_oracle_is_inferred() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "grid": {"x_min": -10.0, "x_max": 10.0, "n_cells": 256, "boundary": "periodic"},
        "model": {"preset": "heat", "epsilon": 0.05},
        "initial": {"kind": "gaussian", "center": 0.0, "width": 0.5, "mass": 1.0},
        "solver": {"t_end": 0.5, "snapshot_interval": 0.25}
    });
    let c = write_config(dir.path(), "heat.json", &cfg);
    let out = dir.path().join("out");
    assert_eq!(invoke("oracle-check", &c, &out, &[]).status.code(), Some(0));
    let s: Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["oracle"]["kind"], "gaussian-heat");
    assert!(s["relative_l1_final"].as_f64().unwrap() < 1e-3);
    let csv = std::fs::read_to_string(out.join("oracle_errors.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let mut no_oracle = demo(32, 0.1);
    no_oracle["model"]["epsilon"] = json!(0.0);
    let c = write_config(dir.path(), "demo.json", &no_oracle);
    assert_eq!(
        invoke("oracle-check", &c, &dir.path().join("o2"), &[])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn diagnose_reports_entropy_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "d.json", &demo(128, 0.1));
    let out = dir.path().join("out");
    assert_eq!(invoke("diagnose", &c, &out, &[]).status.code(), Some(0));
    let s: Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["entropy"]["violations"], 0);
    assert_eq!(s["residuals"].as_array().unwrap().len(), 6 * 3);
    let res = std::fs::read_to_string(out.join("residuals.csv")).unwrap();
    assert!(res.starts_with("law,test_function,refinement_level,value\n"));
    assert!(res.contains("ratio_theta_2,bump1,7,"));
    let ent = std::fs::read_to_string(out.join("entropy.csv")).unwrap();
    assert!(ent.lines().count() > 10);
}

#[test]
fn small_sweep_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo(128, 0.2);
    cfg["sweep"] = json!({"eps_ladder": [0.1, 0.03, 0.01, 0.001], "snapshots": 20});
    let c = write_config(dir.path(), "s.json", &cfg);
    let out = dir.path().join("out");
    let o = invoke("sweep", &c, &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r: Value =
        serde_json::from_slice(&std::fs::read(out.join("sweep_report.json")).unwrap()).unwrap();
    assert_eq!(r["rungs"].as_array().unwrap().len(), 4);
    assert_eq!(r["checks"]["gradient_distances_strictly_decreasing"], true);
    let cells = std::fs::read_to_string(out.join("fluctuation_cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 4 * 20 * 50);
    for f in ["ladder.csv", "distances.svg", "cs_ratio.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}
