use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wolffkit"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Unit ball on a coarse grid so the test stays quick.
fn small_unitball(dir: &Path) -> PathBuf {
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(configs().join("unitball.json")).unwrap()).unwrap();
    cfg["task"]["grid"]["nodes"] = 48.into();
    cfg["task"]["kpotential_stride"] = 12.into();
    let path = dir.join("unitball_small.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn solve_writes_solution_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_unitball(dir.path());
    let out = dir.path().join("out");
    let o = run(&["solve", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "radius,u,v,wolff,kpotential,m_function,ratio");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 7);
    let ratio: f64 = first[6].parse().unwrap();
    assert!(ratio > 0.0 && ratio < 10.0);
    let d: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(d["diagnostics"]["monotone"], true);
}

#[test]
fn output_is_deterministic_and_cache_transparent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_unitball(dir.path());
    let cache = dir.path().join("cache");
    let c = cfg.to_str().unwrap();
    let cold = dir.path().join("cold");
    let warm = dir.path().join("warm");
    let none = dir.path().join("none");
    for out in [&cold, &warm] {
        let o = run(&["solve", "--config", c, "--cache", cache.to_str().unwrap()], out);
        assert_eq!(code(&o), 0);
    }
    assert!(fs::read_dir(&cache).unwrap().count() > 1);
    let o = run(&["solve", "--config", c], &none);
    assert_eq!(code(&o), 0);
    let a = fs::read(cold.join("solution.csv")).unwrap();
    assert_eq!(a, fs::read(warm.join("solution.csv")).unwrap());
    assert_eq!(a, fs::read(none.join("solution.csv")).unwrap());
    assert_eq!(fs::read(cold.join("diagnostics.json")).unwrap(), fs::read(none.join("diagnostics.json")).unwrap());
}

#[test]
fn check_reports_divergence_with_success_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("lebesgue_whole_space.json");
    let o = run(&["check", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("criteria.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "criterion,verdict,numeric_value,fitted_exponent,critical_exponent,margin");
    assert!(rows[1].starts_with("wolff_tail,Diverges,"));
    assert!(rows[2].starts_with("intrinsic_tail,"));
    assert!(rows[3].starts_with("local_wolff_energy,"));
}

#[test]
fn solve_without_solution_exits_3_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("lebesgue_whole_space.json");
    let o = run(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3);
    let e: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("error.json")).unwrap()).unwrap();
    assert_eq!(e["kind"], "nonexistence");
    assert_eq!(e["exit_code"], 3);
}

#[test]
fn unknown_keys_and_bad_exponents_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"params": {"n": 3, "p": 2.0, "q": 0.5, "alpha": 1.0}, "task": {"tolerance": 1e-3}}"#).unwrap();
    let o = run(&["solve", "--config", unknown.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(code(&o), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"params": {"n": 3, "p": 2.0, "q": 1.5, "alpha": 1.0}}"#).unwrap();
    let o = run(&["potential", "--config", bad.to_str().unwrap()], &dir.path().join("b"));
    assert_eq!(code(&o), 2);
    assert!(dir.path().join("b/error.json").exists());
    let o = run(&["verify", "--suite", "nope"], &dir.path().join("c"));
    assert_eq!(code(&o), 2);
}

#[test]
fn potential_at_center_of_unit_ball() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("unitball.json");
    let o = run(&["potential", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("potential.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    let two_pi = 2.0 * std::f64::consts::PI;
    assert!((row[3] / two_pi - 1.0).abs() < 1e-8);
    assert!((row[4] / two_pi - 1.0).abs() < 1e-8);
}

#[test]
fn riccati_study_converges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("riccati.json");
    let o = run(&["riccati", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("riccati.json")).unwrap()).unwrap();
    for order in r["observed_orders"].as_array().unwrap() {
        assert!(order.as_f64().unwrap() >= 1.0);
    }
}

#[test]
fn verify_default_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--suite", "default", "--seed", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}
