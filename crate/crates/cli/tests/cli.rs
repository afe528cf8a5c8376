use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use porolab_cli::{presets, run_scenario};

fn porolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_porolab"))
        .args(args)
        .output()
        .unwrap()
}

fn preset_without(name: &str, section: &str) -> String {
    let text = presets::source(name).unwrap();
    let mut out = String::new();
    let mut skip = false;
    for line in text.lines() {
        if line.starts_with('[') {
            skip = line.trim() == section;
        }
        if !skip {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

#[test]
fn missing_state_law_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, preset_without("heat_baseline", "[state_law]")).unwrap();
    let out = porolab(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("state_law"), "{err}");
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let out = porolab(&["run", "no_such_preset"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lists_presets_as_text_and_json() {
    let out = porolab(&["list-presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 6);
    for name in presets::names() {
        assert_eq!(
            text.lines()
                .filter(|l| l.split_whitespace().next() == Some(name))
                .count(),
            1
        );
    }

    let out = porolab(&["list-presets", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let items = v.as_array().unwrap();
    assert!(items.len() >= 6);
    for it in items {
        assert!(!it["name"].as_str().unwrap().is_empty());
        assert!(!it["case"].as_str().unwrap().is_empty());
    }
}

#[test]
fn heat_baseline_passes_and_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = porolab(&[
        "run",
        "heat_baseline",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let d = dir.path().join("heat_baseline");
    for f in [
        "trajectory.csv",
        "summary.csv",
        "report.csv",
        "report.txt",
        "constants.txt",
        "scenario.toml",
    ] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let report = fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(report.starts_with("check,quantity,bound,observed,slack,pass\n"));
    assert!(!report.contains(",false"));
}

#[test]
fn failing_check_exits_with_one() {
    let text = presets::source("monte_carlo_1d")
        .unwrap()
        .replace(
            "particles = [10000, 40000, 160000]",
            "particles = [1000, 2000, 4000]",
        )
        .replace("drift_mean = [0.002]", "slope_tol = 1e-12");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strict.toml");
    fs::write(&path, text).unwrap();
    let out = porolab(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn edge_preset_passes_the_power_envelope() {
    let s = presets::load("slightly_compressible_edge")
        .unwrap()
        .unwrap();
    let o = run_scenario(&s, None).unwrap();
    let d = o.report("decay").unwrap();
    assert!(d.passed());
    assert_eq!(d.get("m"), Some(2.0));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = porolab(&[
            "run",
            "monte_carlo_1d",
            "--out",
            d.path().to_str().unwrap(),
            "--seed",
            "99",
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let fa = files(&a.path().join("monte_carlo_1d"));
    assert!(fa.len() >= 6);
    assert_eq!(fa, files(&b.path().join("monte_carlo_1d")));
}
