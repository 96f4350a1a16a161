//! Black-box tests of the `gauge-poisson` binary: exit-code contract,
//! output formats, determinism, and the builtin scenario catalog.

use std::path::PathBuf;
use std::process::{Command, Output};

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_gauge-poisson")
}

fn run(args: &[&str]) -> Output {
    Command::new(exe()).args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir.join(name)
}

#[test]
fn scenarios_lists_all_builtins() {
    let out = run(&["scenarios"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() >= 8, "want at least 8 scenarios, got {}", lines.len());
    for name in [
        "wu-yang",
        "constant-section",
        "torus-product",
        "so3-group-average",
        "flat-chart",
        "averaged-chart",
        "free-particle",
        "broken-sign",
    ] {
        assert!(
            lines.iter().any(|l| l.starts_with(name)),
            "scenario '{name}' missing from listing"
        );
    }
}

#[test]
fn scenarios_listing_is_stable() {
    let a = run(&["scenarios"]);
    let b = run(&["scenarios"]);
    assert_eq!(a.stdout, b.stdout);
    // golden prefix: the catalog order is part of the interface
    let text = String::from_utf8(a.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(
        names,
        vec![
            "wu-yang",
            "constant-section",
            "torus-product",
            "so3-group-average",
            "flat-chart",
            "averaged-chart",
            "free-particle",
            "broken-sign"
        ]
    );
}

#[test]
fn every_builtin_verifies_or_simulates() {
    // broken-sign is the negative control and must exit 1; the others 0
    for name in [
        "wu-yang",
        "constant-section",
        "torus-product",
        "so3-group-average",
        "flat-chart",
        "averaged-chart",
        "free-particle",
    ] {
        let out = run(&["verify", "--config", name]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = run(&["verify", "--config", "broken-sign"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all_pass"], serde_json::Value::Bool(false));
    assert_eq!(report["checks"][0]["name"], "jacobi");
}

#[test]
fn missing_config_exits_2() {
    let out = run(&["verify", "--config", "/no/such/file.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn malformed_config_exits_2() {
    let path = tmp("malformed.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["verify", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn domain_error_exits_3() {
    let path = tmp("singular.json");
    std::fs::write(
        &path,
        r#"{"name":"singular","m":3,"fiber":{"type":"so3"},"gauge":{"type":"wu-yang"},
            "simulation":{"t_end":1.0,"step":0.001,
                          "initial":{"p":[0.1,0.0,0.0],"q":[0.0,0.0,0.0],"y":[0.0,0.0,1.0]}}}"#,
    )
    .unwrap();
    let out = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_is_deterministic_and_parallel_agrees() {
    let a = run(&["verify", "--config", "wu-yang", "--seed", "42"]);
    let b = run(&["verify", "--config", "wu-yang", "--seed", "42"]);
    let c = run(&["verify", "--config", "wu-yang", "--seed", "42", "--parallel", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    // a different seed still passes but yields a different report body
    let d = run(&["verify", "--config", "wu-yang", "--seed", "43"]);
    assert_eq!(d.status.code(), Some(0));
    assert_ne!(a.stdout, d.stdout);
}

#[test]
fn report_hash_tracks_config_content() {
    let p1 = tmp("hash1.json");
    let p2 = tmp("hash2.json");
    let base = r#"{"name":"h","m":3,"fiber":{"type":"so3"},"gauge":{"type":"wu-yang"},
                   "verification":{"checks":["rank"],"samples":2,"seed":1}}"#;
    std::fs::write(&p1, base).unwrap();
    std::fs::write(&p2, base.replace("\"samples\":2", "\"samples\":3")).unwrap();
    let r1: serde_json::Value =
        serde_json::from_slice(&run(&["verify", "--config", p1.to_str().unwrap()]).stdout).unwrap();
    let r2: serde_json::Value =
        serde_json::from_slice(&run(&["verify", "--config", p2.to_str().unwrap()]).stdout).unwrap();
    assert_ne!(r1["config_sha256"], r2["config_sha256"]);
    assert_eq!(r1["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_writes_csv_and_conservation_json() {
    let csv_path = tmp("wu-yang.csv");
    let out = run(&["simulate", "--config", "wu-yang", "--out", csv_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,p1,p2,p3,q1,q2,q3,y1,y2,y3");
    assert_eq!(lines.count(), 10001);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json")).unwrap())
            .unwrap();
    for entry in report["conservation"]["entries"].as_array().unwrap() {
        assert!(entry["max_rel_drift"].as_f64().unwrap() <= 1e-8, "{entry}");
    }
}

#[test]
fn average_emits_zero_columns_for_a_constant_section() {
    let out = run(&["average", "--config", "constant-section", "--grid", "0.8:1.2:2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("q1,q2,q3,y1,y2,y3,A1,A2,A3"));
    let mut rows = 0;
    for line in lines {
        rows += 1;
        let cols: Vec<&str> = line.split(',').collect();
        for a in &cols[6..9] {
            assert!(a.parse::<f64>().unwrap().abs() <= 1e-12, "row: {line}");
        }
    }
    assert_eq!(rows, 8);
}

#[test]
fn average_grid_errors_exit_2() {
    let zero = run(&["average", "--config", "constant-section", "--grid", "0:1:0"]);
    assert_eq!(zero.status.code(), Some(2));
    let wrong_gauge = run(&["average", "--config", "free-particle"]);
    assert_eq!(wrong_gauge.status.code(), Some(2));
}

#[test]
fn average_matches_closed_form_on_a_grid() {
    let path = tmp("radial.json");
    std::fs::write(
        &path,
        r#"{"name":"radial","m":3,"fiber":{"type":"so3"},
            "gauge":{"type":"averaged","group":"circle","nodes":128,
                     "sections":[["q1 / sqrt(q1^2 + q2^2 + q3^2)",
                                  "q2 / sqrt(q1^2 + q2^2 + q3^2)",
                                  "q3 / sqrt(q1^2 + q2^2 + q3^2)"]]}}"#,
    )
    .unwrap();
    let out = run(&["average", "--config", path.to_str().unwrap(), "--grid", "0.7:1.5:3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.ends_with("delta1,delta2,delta3"), "header: {header}");
    let mut rows = 0;
    for line in lines {
        rows += 1;
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let max_delta = cols[cols.len() - 3..].iter().fold(0.0f64, |m, v| m.max(*v));
        assert!(max_delta <= 1e-10, "row: {line}");
    }
    assert_eq!(rows, 27);
}
