use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn gapbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gapbound")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn file(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn complete_edges(m: usize, rate: f64) -> String {
    let mut t = format!("masterq v1 M={m}\n");
    for a in 1..=m {
        for b in 1..=m {
            if a != b {
                t += &format!("{a} {b} {rate:e}\n");
            }
        }
    }
    t
}

#[test]
fn analyze_normalized_complete_graph() {
    let dir = TempDir::new().unwrap();
    let input = file(&dir, "k4.txt", &complete_edges(4, 1.0 / 3.0));
    let out = gapbound(&["analyze", s(&input)]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((report["ratio"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
    assert_eq!(report["verdict"], "hypotheses-hold-and-bound-holds");
}

#[test]
fn analyze_unscaled_cycle_fails_hypotheses() {
    let dir = TempDir::new().unwrap();
    let cycle = dir.path().join("c8.txt");
    assert_eq!(code(&gapbound(&["gen", "cycle", "--m", "8", "--out", s(&cycle)])), 0);
    let json = dir.path().join("report.json");
    let out = gapbound(&["analyze", s(&cycle), "--out", s(&json)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("hypotheses-fail "), "{}", stdout(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["verdict"], "hypotheses-fail");
}

#[test]
fn analyze_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let empty = file(&dir, "empty.txt", "");
    assert_eq!(code(&gapbound(&["analyze", s(&empty)])), 2);
    assert_eq!(code(&gapbound(&["analyze", "/nonexistent/input"])), 2);
    let k4 = file(&dir, "k4.txt", &complete_edges(4, 1.0));
    assert_eq!(code(&gapbound(&["analyze", s(&k4), "--g", "0.5", "--alpha", "0.5"])), 2);
}

#[test]
fn scan_writes_one_row_per_instance() {
    let dir = TempDir::new().unwrap();
    let spec = file(&dir, "spec.json", r#"{"family":"complete","sizes":[8,16,32,64],"seed":1}"#);
    let out = gapbound(&["scan", s(&spec)]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.contains("hypotheses-hold-and-bound-holds")));
}

#[test]
fn scan_rejects_invalid_specs() {
    let dir = TempDir::new().unwrap();
    for (name, text) in [
        ("family", r#"{"family":"hypercube","sizes":[8],"seed":1}"#),
        ("replicas", r#"{"family":"complete","sizes":[8],"seed":1,"replicas":0}"#),
        ("unknown", r#"{"family":"complete","sizes":[8],"seed":1,"colour":"red"}"#),
    ] {
        let spec = file(&dir, &format!("{name}.json"), text);
        assert_eq!(code(&gapbound(&["scan", s(&spec)])), 2, "{name}");
    }
}

#[test]
fn simulate_two_state_relaxation() {
    let dir = TempDir::new().unwrap();
    let input = file(&dir, "two.txt", "masterq v1 M=2\n1 2 0.3\n2 1 0.7\n");
    let out = gapbound(&["simulate", s(&input), "--p0", "delta:1", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fit: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!((fit["fit"]["rate"].as_f64().unwrap() - 1.0).abs() < 0.02);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,p_1,p_2,d2,dTV\n"));
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn simulate_zero_horizon_has_single_row() {
    let dir = TempDir::new().unwrap();
    let input = file(&dir, "two.txt", "masterq v1 M=2\n1 2 0.3\n2 1 0.7\n");
    gapbound(&["simulate", s(&input), "--p0", "delta:1", "--t-max", "0", "--out", s(dir.path())]);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn simulate_jump_process_agrees_with_evolution() {
    let dir = TempDir::new().unwrap();
    let input = file(&dir, "k4.txt", &complete_edges(4, 1.0));
    let out = gapbound(&[
        "simulate", s(&input), "--p0", "delta:1", "--t-max", "0.5", "--jump-process", "R=20000", "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let hist = fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert!(hist.starts_with("state,count,frequency\n"));
    assert_eq!(hist.lines().count(), 5);
}

#[test]
fn verify_small_passes_and_detects_tampering() {
    assert_eq!(code(&gapbound(&["verify", "small"])), 0);
    let dir = TempDir::new().unwrap();
    let vectors = file(
        &dir,
        "vectors.json",
        r#"{"complete_ratio": [[8, 1.2]], "two_state_p1_at_1": 0.8103638323514327,
            "k4_p1_at_half": 0.35150146242745955, "two_state_s_star": 0.9165151389911680}"#,
    );
    assert_eq!(code(&gapbound(&["verify", "small", "--vectors", s(&vectors)])), 1);
    let broken = file(&dir, "broken.json", "{");
    assert_eq!(code(&gapbound(&["verify", "small", "--vectors", s(&broken)])), 2);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&gapbound(&["frobnicate"])), 2);
    assert_eq!(code(&gapbound(&["--help"])), 0);
}
