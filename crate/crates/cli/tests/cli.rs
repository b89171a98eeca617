use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_powerpath"))
}

fn run_config(dir: &Path, name: &str, config: &Value, extra: &[&str]) -> (Output, PathBuf) {
    let cfg_path = dir.join(format!("{name}.json"));
    fs::write(&cfg_path, config.to_string()).unwrap();
    let out = dir.join(name);
    let output = bin()
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn spp_empty_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "command": "spp",
        "domain": {"kind": "box", "d": 2},
        "params": {"p": 2.0},
        "spp": {"source": [0.25, 0.5], "target": [0.75, 0.5]}
    });
    let (output, out) = run_config(dir.path(), "spp", &cfg, &[]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let path = read_json(&out.join("path.json"));
    assert_eq!(path["length"].as_f64().unwrap(), 0.25);
    assert_eq!(path["cardinality"], 2);
    assert!(out.join("manifest.json").exists());
    assert!(out.join("summary.txt").exists());
}

#[test]
fn estimate_c_p_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "command": "estimate-c",
        "domain": {"kind": "box", "d": 2},
        "params": {"p": 1.0},
        "estimate_c": {"t_schedule": [2.0, 4.0], "trials": 5}
    });
    let (output, out) = run_config(dir.path(), "c", &cfg, &["--seed", "3"]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let rows = csv_rows(&out.join("cdp_2_1_3.csv"));
    // largest-t mean and the extrapolated value
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row[1], "1.0");
        assert_eq!(row[2], "0.0");
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["seed"], 3);
    assert_eq!(manifest["config"]["estimate_c"]["lambda"], 1.0);
}

fn converge_config() -> Value {
    serde_json::json!({
        "command": "converge",
        "seed": 11,
        "domain": {"kind": "torus", "d": 2},
        "density": {"kind": "uniform"},
        "params": {"p": 2.0},
        "converge": {
            "n_schedule": [2000],
            "trials": 10,
            "pairs": [
                {"x": [0.25, 0.5], "y": [0.75, 0.5]},
                {"x": [0.2, 0.2], "y": [0.6, 0.7]}
            ]
        }
    })
}

#[test]
fn converge_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let (output, out) = run_config(dir.path(), "conv", &converge_config(), &["--threads", "1"]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let rows = csv_rows(&out.join("ratios.csv"));
    assert_eq!(rows.len(), 20);
    for pair in ["0", "1"] {
        assert_eq!(rows.iter().filter(|r| r[1] == pair).count(), 10);
    }
    for row in &rows {
        let ratio: f64 = row[3].parse().unwrap();
        assert!(ratio.is_finite() && ratio > 0.5 && ratio < 2.0, "{ratio}");
    }
    let summary = csv_rows(&out.join("convergence_ratio_2_2_11.csv"));
    assert_eq!(summary.len(), 2);
    let plot = fs::read_to_string(out.join("convergence_ratio_2_2_11.dat")).unwrap();
    assert_eq!(plot.lines().count(), 3);
    assert!(out.join("manifest.json").exists());
    assert!(out.join("records.jsonl").exists());
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, out_a) = run_config(dir.path(), "a", &converge_config(), &[]);
    let (b, out_b) = run_config(dir.path(), "b", &converge_config(), &[]);
    assert!(a.status.success() && b.status.success());
    let mut names: Vec<_> = fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 5);
    for name in names {
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(
            fs::read(out_a.join(&name)).unwrap(),
            fs::read(out_b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn rerun_replaces_previous_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "command": "sample",
        "domain": {"kind": "torus", "d": 3},
        "params": {"p": 2.0},
        "sample": {"n": 50}
    });
    let (first, out) = run_config(dir.path(), "s", &cfg, &[]);
    assert!(first.status.success());
    let (second, _) = run_config(dir.path(), "s", &cfg, &[]);
    assert!(second.status.success());
    let text = fs::read_to_string(out.join("cloud.csv")).unwrap();
    assert!(text.starts_with("# d=3 domain=torus seed=0"));
    assert_eq!(text.lines().count(), 51);
    // no temp directories left behind
    let leftovers = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .contains(".tmp-")
        })
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn config_errors_exit_2_with_all_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "command": "converge",
        "domain": {"kind": "box", "d": 2, "side": 0.0},
        "params": {"p": 0.5},
        "converge": {"n_schedule": [], "trials": 1, "pairs": []}
    });
    let (output, out) = run_config(dir.path(), "bad", &cfg, &[]);
    assert_eq!(output.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["kind"], "config");
    let errors = err["errors"].as_array().unwrap();
    assert!(errors.len() >= 5, "{errors:?}");
    assert!(!out.exists());
}

#[test]
fn unknown_field_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "command": "sample",
        "domain": {"kind": "box", "d": 2},
        "params": {"p": 2.0},
        "colour": "red"
    });
    let (output, _) = run_config(dir.path(), "unk", &cfg, &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "command": "spp",
        "domain": {"kind": "box", "d": 2},
        "params": {"p": 2.0},
        "spp": {"source": [0.1, 0.1], "target": [0.9, 0.9], "n": 100, "mode": "exact", "exact_cap": 10}
    });
    let (output, out) = run_config(dir.path(), "cap", &cfg, &[]);
    assert_eq!(output.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["kind"], "runtime");
    assert!(err["errors"][0].as_str().unwrap().contains("cap"));
    assert!(!out.exists());
}

#[test]
fn geodesic_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "command": "geodesic",
        "domain": {"kind": "torus", "d": 2},
        "density": {"kind": "bump", "amplitude": 2.0, "width": 0.2},
        "params": {"p": 2.0},
        "geodesic": {"source": [0.25, 0.5], "target": [0.75, 0.5], "resolution": 32}
    });
    let (output, out) = run_config(dir.path(), "geo", &cfg, &[]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert_eq!(fs::read(out.join("field.bin")).unwrap().len(), 32 * 32 * 8);
    let side = read_json(&out.join("field.json"));
    assert_eq!(side["resolution"], 32);
    let est = read_json(&out.join("dist_p.json"));
    assert!(est["value"].as_f64().unwrap() > 0.0);
    assert!(est["error_estimate"].as_f64().unwrap() >= 0.0);
}

#[test]
fn diagnose_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "command": "diagnose",
        "seed": 2,
        "domain": {"kind": "torus", "d": 2},
        "params": {"p": 2.0},
        "diagnose": {
            "gw": {"trials": 200},
            "cardinality": {"n_schedule": [200, 400], "pair": {"x": [0.25, 0.5], "y": [0.75, 0.5]}, "trials": 4},
            "tail": {"n": 300, "pair": {"x": [0.25, 0.5], "y": [0.75, 0.5]}, "trials": 4},
            "theta": {"samples": 1000}
        }
    });
    let (output, out) = run_config(dir.path(), "diag", &cfg, &[]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let gw = csv_rows(&out.join("gw_gen_mean_2_2_2.csv"));
    assert_eq!(gw.len(), 3);
    assert!(out.join("cardinality_slope_2_2_2.csv").exists());
    assert!(out.join("tail_freq_2_2_2.csv").exists());
    assert_eq!(csv_rows(&out.join("cardinality_samples.csv")).len(), 8);
    assert!(out.join("theta.json").exists());
    // every numeric cell is finite
    for entry in fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            for row in csv_rows(&path) {
                for cell in row {
                    if let Ok(v) = cell.parse::<f64>() {
                        assert!(v.is_finite(), "{path:?}");
                    }
                }
            }
        }
    }
}
