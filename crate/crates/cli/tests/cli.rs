use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

const IC_A: &str = "0.2785,0.1181,0.4164";
const IC_B: &str = "0.278,0.1181,0.4165";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ewsdyn")).current_dir(dir).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn simulate_separates_the_two_fates() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["simulate", "--h", "0.2649", "--ic", IC_A, "--out", "a"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&tmp.path().join("a/verdict.json"))["kind"], "limit-cycle");
    assert!(std::fs::read_to_string(tmp.path().join("a/trajectory.csv")).unwrap().lines().count() > 100);

    let o = run(tmp.path(), &["simulate", "--h", "0.2649", "--ic", IC_B, "--out", "b", "--format", "json"]);
    assert!(o.status.success());
    assert_eq!(json(&tmp.path().join("b/verdict.json"))["kind"], "boundary-xz");
    assert!(tmp.path().join("b/trajectory.json").exists());
    // nothing lands outside the requested directories
    assert_eq!(entries(tmp.path()), ["a", "b"]);
}

#[test]
fn configuration_errors_exit_2_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["simulate", "--config", "missing.cfg", "--ic", IC_A]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(tmp.path(), &["ews", "--ic", IC_B, "--k", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(tmp.path(), &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(tmp.path().join("bad.cfg"), "h = 0.2649\nunknown_key = 1\n").unwrap();
    let o = run(tmp.path(), &["simulate", "--config", "bad.cfg", "--ic", IC_A]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(entries(tmp.path()), ["bad.cfg"]);
}

#[test]
fn normalform_coefficients_and_bracket_failure() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["normalform", "--out", "nf"]);
    assert!(o.status.success());
    let c = json(&tmp.path().join("nf/coefficients.json"));
    assert!((c["delta"].as_f64().unwrap() - 0.25038).abs() < 1e-4);
    assert!((c["h_hopf"].as_f64().unwrap() - 0.26462).abs() < 1e-4);
    let first = std::fs::read(tmp.path().join("nf/coefficients.json")).unwrap();
    run(tmp.path(), &["normalform", "--out", "nf"]);
    assert_eq!(first, std::fs::read(tmp.path().join("nf/coefficients.json")).unwrap());

    std::fs::write(tmp.path().join("narrow.cfg"), "fsn_bracket = 0.27, 0.3\nout = narrow\n").unwrap();
    let o = run(tmp.path(), &["normalform", "--config", "narrow.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("narrow").exists());
}

#[test]
fn ews_warns_only_on_the_collapsing_trajectory() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["ews", "--h", "0.2649", "--ic", IC_B, "--out", "b"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&tmp.path().join("b/ews_report.json"));
    assert_eq!(r["verdict"], "extinction-warning");
    let s = r["warning_time_s"].as_f64().unwrap();
    assert!((25.0..32.0).contains(&s), "{s}");
    let csv = std::fs::read_to_string(tmp.path().join("b/critical_curve.csv")).unwrap();
    assert!(csv.starts_with("tau,wbar,wcrit_i0\n"));

    let o = run(tmp.path(), &["ews", "--h", "0.2649", "--ic", IC_A, "--out", "a"]);
    assert!(o.status.success());
    assert_eq!(json(&tmp.path().join("a/ews_report.json"))["verdict"], "coexistence-minimum");
    assert!(!tmp.path().join("a/critical_curve.csv").exists());
}

#[test]
fn sweep_finds_bifurcations_and_handles_empty_range() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["sweep", "--out", "s"]);
    assert!(o.status.success());
    let ev = json(&tmp.path().join("s/events.json"));
    let hs: Vec<(String, f64)> =
        ev.as_array().unwrap().iter().map(|e| (e["kind"].as_str().unwrap().to_string(), e["h"].as_f64().unwrap())).collect();
    let near = |kind: &str, h: f64| hs.iter().any(|(k, x)| k == kind && (x - h).abs() < 1e-3);
    assert!(near("hopf", 0.26462), "{hs:?}");
    assert!(near("hopf", 0.06135), "{hs:?}");
    assert!(near("transcritical", 0.35778), "{hs:?}");
    let first = std::fs::read(tmp.path().join("s/events.json")).unwrap();
    run(tmp.path(), &["sweep", "--out", "s"]);
    assert_eq!(first, std::fs::read(tmp.path().join("s/events.json")).unwrap());

    std::fs::write(tmp.path().join("empty.cfg"), "h_range = 0.3, 0.3\n").unwrap();
    let o = run(tmp.path(), &["sweep", "--config", "empty.cfg", "--out", "e"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(tmp.path().join("e/events.json")).unwrap().trim(), "[]");
    for f in entries(&tmp.path().join("e")).iter().filter(|f| f.ends_with(".csv")) {
        assert_eq!(std::fs::read_to_string(tmp.path().join("e").join(f)).unwrap().lines().count(), 1);
    }
}
