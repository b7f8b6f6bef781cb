use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

struct Run {
    code: i32,
    stderr: String,
    out: PathBuf,
    _dir: tempfile::TempDir,
}

fn twinheat(verb: &str, config: &str, extra: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_twinheat"))
        .arg(verb)
        .arg("--config")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Run {
        code: output.status.code().unwrap(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        out,
        _dir: dir,
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn double_check_variable_density() {
    let r = twinheat(
        "double-check",
        r#"{"n": 64, "coefficients": {"polynomial": {"kappa": [1.0, 0.5]}}}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let checks = json(&r.out.join("double_check.json"));
    let obj = checks.as_object().unwrap();
    assert_eq!(obj.len(), 4);
    for (name, c) in obj {
        assert_eq!(c["pass"], Value::Bool(true), "{name}");
        assert!(c["max_residual"].as_f64().unwrap() <= 1e-9, "{name}");
    }
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(twinheat("double-check", r#"{"n": 1}"#, &[]).code, 2);
    assert_eq!(twinheat("control", r#"{"n": 16, "bogus": 1}"#, &[]).code, 2);
    assert_eq!(twinheat("control", "not json", &[]).code, 2);
    assert_eq!(
        twinheat("control", r#"{"n": 16}"#, &["--threads", "0"]).code,
        2
    );
    // A target below one cell is not representable.
    let r = twinheat(
        "fatcantor",
        r#"{"n": 16, "region": "fatcantor:0.01:2"}"#,
        &[],
    );
    assert_eq!(r.code, 2, "{}", r.stderr);

    let output = Command::new(env!("CARGO_BIN_EXE_twinheat"))
        .arg("control")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn zero_data_control_is_free() {
    let r = twinheat("control", r#"{"n": 16, "initial": "zero"}"#, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let summary = json(&r.out.join("summary.json"));
    assert_eq!(
        summary["runs"][0]["report"]["control_cost"].as_f64(),
        Some(0.0)
    );
    assert_eq!(summary["config"]["n"].as_u64(), Some(16));
}

#[test]
fn headline_control_artifacts() {
    let r = twinheat(
        "control",
        r#"{"n": 128, "T": 1.0, "region": "0.2,0.3", "method": "hum", "seed": 11}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = fs::read_to_string(r.out.join("shared_control.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    let cells: Vec<usize> = header
        .split(',')
        .skip(1)
        .map(|c| c.parse().unwrap())
        .collect();
    assert!(header.starts_with("t,"));
    assert!(cells.iter().all(|&c| (25..39).contains(&c)), "{header}");
    let last = csv.lines().last().unwrap();
    assert!(last.starts_with("1.0,") && last.split(',').skip(1).all(|v| v == "0.0"));

    let norms = fs::read_to_string(r.out.join("norms.csv")).unwrap();
    assert_eq!(norms.lines().next(), Some("trajectory,t,l2,sup"));
    for name in ["dirichlet", "neumann", "double"] {
        assert!(norms.lines().any(|l| l.starts_with(name)));
    }

    let summary = json(&r.out.join("summary.json"));
    let report = &summary["runs"][0]["report"];
    assert!(report["final_u_l2"].as_f64().unwrap() <= 1e-6);
    assert!(report["final_v_l2"].as_f64().unwrap() <= 1e-6);
    assert_eq!(summary["all_within_tolerance"], Value::Bool(true));
    assert_eq!(summary["config"]["region"], Value::from("0.2,0.3"));
}

#[test]
fn lr_control_writes_ledger() {
    let r = twinheat(
        "control",
        r#"{"n": 32, "T": 0.5, "region": "0.2,0.4", "method": "lr", "seed": 3}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let ledger = json(&r.out.join("ledger.json"));
    let slices = ledger.as_array().unwrap();
    assert!(slices.len() >= 3);
    let lambdas: Vec<f64> = slices
        .iter()
        .map(|s| s["lambda"].as_f64().unwrap())
        .collect();
    assert!(lambdas
        .windows(2)
        .all(|w| (w[1] - 2.0 * w[0]).abs() <= 1e-12 * w[1]));
}

#[test]
fn tolerance_miss_exits_4_and_keeps_summary() {
    let r = twinheat(
        "control",
        r#"{"n": 32, "T": 0.05, "region": "0.1,0.2", "tolerances": {"hum": 1e-300}}"#,
        &[],
    );
    assert_eq!(r.code, 4, "{}", r.stderr);
    let summary = json(&r.out.join("summary.json"));
    assert_eq!(summary["all_within_tolerance"], Value::Bool(false));
}

#[test]
fn too_few_control_steps_exit_3() {
    let r = twinheat(
        "control",
        r#"{"n": 32, "region": "0.5,0.52", "steps": 4}"#,
        &[],
    );
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn specineq_full_region_l2_constants_are_one() {
    let r = twinheat(
        "specineq",
        r#"{"n": 32, "region": "full", "lambda_sweep": [3.5, 7.0, 12.0, 20.0]}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = fs::read_to_string(r.out.join("specineq.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("lambda,family,method,mode_count,region_measure,constant")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 3 * 2);
    // The lifted region of the simultaneous family covers only the plus copy,
    // so only the single-system constants are exactly one.
    for row in rows
        .iter()
        .filter(|r| r[2] == "sigma-min-l2" && r[1] != "simultaneous")
    {
        let c: f64 = row[5].parse().unwrap();
        assert!((c - 1.0).abs() < 1e-12, "{row:?}");
    }
    for row in rows.iter().filter(|r| r[1] == "simultaneous") {
        assert!(row[5].parse::<f64>().unwrap() >= 1.0, "{row:?}");
    }
    let fit = json(&r.out.join("fit.json"));
    for family in ["dirichlet", "neumann", "simultaneous"] {
        assert!(fit[family]["slope"].is_number(), "{fit}");
    }
}

#[test]
fn specineq_single_cell_is_infinite() {
    let r = twinheat(
        "specineq",
        r#"{"n": 10, "region": "0.51,0.59", "lambda_sweep": [20.0, 25.0]}"#,
        &[],
    );
    assert_eq!(r.code, 3, "{}", r.stderr);
    let csv = fs::read_to_string(r.out.join("specineq.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",INF")));
}

#[test]
fn fatcantor_mask() {
    let r = twinheat(
        "fatcantor",
        r#"{"n": 1024, "region": "fatcantor:0.3:6"}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let mask = fs::read_to_string(r.out.join("mask.txt")).unwrap();
    assert_eq!(mask.trim_end().len(), 1024);
    let ones = mask.chars().filter(|&c| c == '1').count();
    assert!((ones as f64 / 1024.0 - 0.3).abs() <= 6.0 / 1024.0);
    let info = json(&r.out.join("fatcantor.json"));
    assert_eq!(info["cells"].as_u64(), Some(ones as u64));

    // The mask file round-trips as a region spec.
    let spec = format!(
        r#"{{"n": 1024, "region": "mask:{}", "lambda_sweep": [5.0]}}"#,
        r.out.join("mask.txt").display()
    );
    let again = twinheat("specineq", &spec, &[]);
    assert_eq!(again.code, 0, "{}", again.stderr);
}

#[test]
fn simulate_free_evolution() {
    let r = twinheat(
        "simulate",
        r#"{"n": 24, "T": 0.1, "steps": 10, "pairs": 2, "seed": 5}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    for k in 0..2 {
        let norms = fs::read_to_string(r.out.join(format!("norms_p{k}.csv"))).unwrap();
        assert_eq!(norms.lines().count(), 1 + 3 * 11);
    }
    let summary = json(&r.out.join("summary.json"));
    for run in summary["runs"].as_array().unwrap() {
        assert!(run["report"]["max_norm_increase"].as_f64().unwrap() <= 1e-12);
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"n": 48, "T": 0.5, "region": "0.3,0.5", "method": "lr", "pairs": 2}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = |seed: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_twinheat"))
            .args(["control", "--seed", seed, "--config"])
            .arg(&cfg)
            .arg("--output-dir")
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        snapshot(&out)
    };
    let first = run("99");
    assert_eq!(first.len(), 1 + 4 * 2);
    assert_eq!(first, run("99"));
    let other = run("100");
    assert_ne!(first["control_p0.csv"], other["control_p0.csv"]);
}
