//! End-to-end checks of the built `qtherm` binary: artifact layout,
//! exit codes, reproducibility from a manifest, and worker-count
//! independence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const ARTIFACTS: [&str; 6] = [
    "manifest.json",
    "timeseries.csv",
    "profile_initial.csv",
    "profile_final.csv",
    "fits.json",
    "predictions.csv",
];

fn qtherm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtherm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

#[test]
fn desk_small_run_produces_the_artifact_set() {
    let out = fresh_dir("cli-artifacts");
    let result = qtherm(&[
        "run",
        "--preset",
        "desk-small",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    for name in ARTIFACTS {
        assert!(out.join(name).is_file(), "missing artifact {name}");
    }
    // No atomic-write temporaries may survive.
    for entry in std::fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name();
        assert!(
            !name.to_string_lossy().starts_with('.'),
            "leftover temporary {name:?}"
        );
    }
}

#[test]
fn rerun_from_manifest_matches_bytes_even_across_worker_counts() {
    let a = fresh_dir("cli-repro-a");
    let b = fresh_dir("cli-repro-b");
    let first = qtherm(&[
        "run",
        "--preset",
        "desk-small",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(first.status.success());
    let manifest = a.join("manifest.json");
    let second = qtherm(&[
        "run",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(
        second.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&second.stderr)
    );
    for name in ARTIFACTS {
        if name == "manifest.json" {
            continue; // differs in wall-clock timing only
        }
        assert_eq!(
            read(&a.join(name)),
            read(&b.join(name)),
            "artifact {name} changed under re-run"
        );
    }
}

#[test]
fn seed_override_lands_in_the_manifest() {
    let out = fresh_dir("cli-seed");
    let result = qtherm(&[
        "run",
        "--preset",
        "desk-small",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["master_seed"], 7);
    assert_eq!(manifest["config"]["model"]["seed"], 7);
}

#[test]
fn model_subcommand_prints_derived_scales() {
    let result = qtherm(&["model", "--preset", "fig2"]);
    assert!(result.status.success());
    let units: serde_json::Value = serde_json::from_slice(&result.stdout).expect("valid JSON");
    let list = units.as_array().expect("array of derived units");
    assert!(!list.is_empty());
    assert!(list[0]["n_basis"].as_u64().unwrap() > 0);
}

#[test]
fn missing_config_file_exits_2() {
    let result = qtherm(&["run", "--config", "/no/such/file.json"]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn subcommand_and_config_kind_must_agree() {
    let result = qtherm(&["curve", "--preset", "desk-small"]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("qtherm run"));
}

#[test]
fn config_and_preset_flags_conflict() {
    let result = qtherm(&["run", "--preset", "desk-small", "--config", "x.json"]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn unknown_preset_is_rejected_by_the_parser() {
    let result = qtherm(&["run", "--preset", "fig99"]);
    assert_eq!(result.status.code(), Some(2));
}

fn small_model(coupling: f64, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "temperature": 6.22,
        "bath_prefactor": 4.5102,
        "coupling": coupling,
        "system_levels": 3,
        "level_spacing": 1.0,
        "central_energy": 12.0,
        "window_half_width": 2.5,
        "seed": seed,
    })
}

fn run_config_file(dir: &Path, name: &str, config: &serde_json::Value) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    path
}

#[test]
fn basis_state_run_from_a_config_file() {
    let out = fresh_dir("cli-basis-run");
    let config = serde_json::json!({
        "experiment": "run",
        "name": "basis-smoke",
        "model": small_model(0.0141, 5),
        "family": { "kind": "basis_state" },
        "time_grid": { "mode": "explicit", "t_max": 40.0, "n_samples": 9 },
        "n_seeds": 1,
    });
    let path = run_config_file(&out, "config.json", &config);
    let result = qtherm(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.join("run").to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    for name in ARTIFACTS {
        assert!(out.join("run").join(name).is_file(), "missing {name}");
    }
    // A point-like initial profile is legitimately unfittable; the report
    // must say so instead of failing the run.
    let fits: serde_json::Value = serde_json::from_slice(&read(&out.join("run/fits.json"))).unwrap();
    assert!(fits["initial_profile"]["note"].is_string());
    assert!(fits["final_profile"]["ratio"].is_f64());
}

#[test]
fn curve_with_both_group_kinds_runs_from_a_config_file() {
    let out = fresh_dir("cli-curve-smoke");
    let config = serde_json::json!({
        "experiment": "curve",
        "name": "curve-smoke",
        "initial_groups": [{
            "label": "narrow",
            "model": small_model(0.0, 11),
            "gamma0_list": [0.01],
            "n_seeds": 2,
            "truncation_half_widths": 300.0,
            "min_window": 0.05,
        }],
        "evolved_groups": [{
            "label": "evolved",
            "model": small_model(0.0141, 11),
            "gamma0_list": [0.25],
            "include_basis_state": true,
            "n_seeds": 1,
            "measure": "final_entropy",
        }],
    });
    let path = run_config_file(&out, "config.json", &config);
    let result = qtherm(&[
        "curve",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.join("run").to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    for name in ["manifest.json", "curve.csv", "points.json", "predictions.csv"] {
        assert!(out.join("run").join(name).is_file(), "missing {name}");
    }
    let table = String::from_utf8(read(&out.join("run/curve.csv"))).unwrap();
    assert!(table.contains("S_initial"));
    assert!(table.contains("S_final"));
    assert!(table.contains("basis_state"));
}

#[test]
fn toy_sweep_runs_from_a_config_file() {
    let out = fresh_dir("cli-sweep-smoke");
    let config = serde_json::json!({
        "experiment": "sweep",
        "name": "sweep-smoke",
        "base": {
            "temperature": 6.22,
            "bath_prefactor": 1.2,
            "coupling": 0.05,
            "system_levels": 3,
            "level_spacing": 1.0,
            "central_energy": 12.0,
            "window_half_width": 2.0,
            "seed": 13,
        },
        "steps": 3,
        "gamma0": 0.1,
        "n_seeds": 1,
        "draws_per_seed": 2,
        "basis_offsets": 1,
    });
    let path = run_config_file(&out, "config.json", &config);
    let result = qtherm(&[
        "sweep",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.join("run").to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    for name in ["manifest.json", "sweep.csv", "points.json", "predictions.csv"] {
        assert!(out.join("run").join(name).is_file(), "missing {name}");
    }
    let table = String::from_utf8(read(&out.join("run/sweep.csv"))).unwrap();
    // Three steps, two families each, plus the header.
    assert_eq!(table.lines().count(), 7);
}
