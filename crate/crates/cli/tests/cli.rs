use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

const REFLECTED: &str = r#"
[model]
name = "reflected_dbm"
mu = 1.0
sigma = 1.4142135623730951
c_h = 1.0
k1 = 1.0
k5 = 1.0
"#;

const DBM: &str = r#"
[model]
name = "dbm"
mu = 1.0
sigma = 1.4142135623730951
c_b = 1.0
c_h = 1.0
k1 = 1.0
k2 = 1.0
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_ssinv"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .env_remove("SSINV_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn reflected_solve_reports_closed_form_optimum() {
    let dir = TempDir::new().unwrap();
    let cfg = REFLECTED.replace("sigma = 1.4142135623730951", "sigma = 2.0").replace("mu = 1.0", "mu = 2.0");
    let o = run(dir.path(), &cfg, &["solve"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    // z* = sqrt(2 k1 mu / c_h), F* = sqrt(2 k1 mu c_h) + sigma^2 c_h / (2 mu).
    let out = stdout(&o);
    assert!(out.contains("y*=0.000000 z*=2.000000 F*=3.000000"), "{out}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/solve.json")).unwrap()).unwrap();
    assert!(json["report"]["boundary_case"].as_bool().unwrap());
    assert!(dir.path().join("out/f_surface.csv").exists());
}

#[test]
fn gbm_without_low_stock_penalty_has_no_minimizer() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nname = \"gbm\"\nmu = 1.0\nsigma = 1.0\nk1 = 1.0\nk2 = 1.0\nk3 = 1.0\nk4 = 0.0\n";
    let o = run(dir.path(), cfg, &["solve"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("no-order regime"));
}

#[test]
fn malformed_config_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), "[model\nname = 1", &["solve"]).status.code(), Some(1));
    let unknown = format!("{DBM}\nbogus = 1\n");
    assert_eq!(run(dir.path(), &unknown, &["solve"]).status.code(), Some(1));
}

#[test]
fn verify_dbm_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), DBM, &["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/qvi.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], serde_json::Value::Bool(true));
}

#[test]
fn simulate_is_independent_of_thread_count() {
    let cfg = format!(
        "{DBM}\n[simulate]\nseed = 11\nhorizon = 20.0\npaths = 6\npolicy = {{ kind = \"order_up_to\", y = 0.0, z = 1.0 }}\n"
    );
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let dir = TempDir::new().unwrap();
        let o = run(dir.path(), &cfg, &["--threads", threads, "simulate"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("seed=11"));
        outputs.push((
            std::fs::read(dir.path().join("out/simulate.json")).unwrap(),
            std::fs::read(dir.path().join("out/histogram.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn compare_flags_cheaper_just_in_time() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{REFLECTED}\n[compare]\nsimulate = false\n");
    let o = run(dir.path(), &cfg, &["compare"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/compare.csv")).unwrap();
    let jit = csv.lines().find(|l| l.starts_with("just_in_time")).unwrap();
    assert!(jit.contains(",true,"), "{jit}");
}

#[test]
fn compare_rejects_unreflected_model() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), DBM, &["compare"]).status.code(), Some(1));
}
