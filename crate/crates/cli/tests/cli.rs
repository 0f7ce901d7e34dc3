use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfp")).args(args).output().expect("spawn qfp")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const CANONICAL: &str = r#"
[params]
omega = 1.0
gamma = 0.5
d_pp = 1.0
d_qq = 0.5
d_pq = 0.0
"#;

const PURITY_POINT: &str = r#"
[params]
omega = 1.0
gamma = 0.6
d_pp = 0.375
d_qq = 0.375
d_pq = -0.225
"#;

fn scenario(head: &str, params: &str, tail: &str) -> String {
    format!("{head}\n{params}\n{tail}")
}

#[test]
fn validate_flags_negative_delta() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        r#"
n = 16
tasks = ["validate"]

[params]
omega = 1.0
gamma = 1.0
d_pp = 0.1
d_qq = 0.1
d_pq = 0.0
"#,
    );
    let out = qfp(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Invalid"), "{text}");
    assert!(text.contains("delta = -2.4e-1"), "{text}");

    let ok = write(dir.path(), "ok.toml", &scenario("n = 16\ntasks = [\"validate\"]", CANONICAL, ""));
    assert_eq!(code(&qfp(&["validate", "--config", ok.to_str().unwrap()])), 0);
}

#[test]
fn run_records_invalid_params_as_failed_check() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        r#"
n = 16
tasks = ["validate", "report"]

[params]
omega = 1.0
gamma = 1.0
d_pp = 0.1
d_qq = 0.1
d_pq = 0.0
"#,
    );
    let out_dir = dir.path().join("out");
    let out = qfp(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["validate"]["lindblad"]["classification"], "Invalid");
    assert!(report["validate"]["lindblad"]["delta"].as_f64().unwrap() < 0.0);
    assert_eq!(report["passed"], false);
    assert!(out_dir.join("report.md").exists());
}

#[test]
fn config_errors_exit_two_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    let small = write(dir.path(), "small.toml", &scenario("n = 2\ntasks = [\"steady\"]", CANONICAL, ""));
    let out = qfp(&["run", "--config", small.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("field `n`"), "{}", String::from_utf8_lossy(&out.stderr));

    let unknown = write(
        dir.path(),
        "unknown.toml",
        &scenario("n = 16\ntasks = [\"steady\"]\nbogus = 1", CANONICAL, ""),
    );
    let out = qfp(&["validate", "--config", unknown.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&qfp(&["validate", "--config", missing.to_str().unwrap()])), 2);

    let no_tasks = write(dir.path(), "empty.toml", &scenario("n = 16\ntasks = []", CANONICAL, ""));
    let out = qfp(&["validate", "--config", no_tasks.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tasks"));
}

#[test]
fn run_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "det.json",
        r#"{
  "n": 12,
  "seed": 5,
  "tasks": ["validate", "steady", "evolve", "lyapunov"],
  "params": {"omega": 1.0, "gamma": 0.5, "d_pp": 1.0, "d_qq": 0.5, "d_pq": 0.0},
  "time": {"t_max": 1.0, "stride": 0.5},
  "validate": {"identity_samples": 3},
  "lyapunov": {"vectors": 8}
}"#,
    );
    let runs: Vec<String> = ["a", "b"]
        .iter()
        .map(|tag| {
            let out_dir = dir.path().join(tag);
            let jobs = if *tag == "a" { "1" } else { "3" };
            let out = qfp(&[
                "run",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "--jobs",
                jobs,
            ]);
            assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
            std::fs::read_to_string(out_dir.join("report.json")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let report: Value = serde_json::from_str(&runs[0]).unwrap();
    assert_eq!(report["scenario"], "det");
    assert_eq!(report["seed"], 5);
}

#[test]
fn overrides_apply() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "o.toml", &scenario("n = 12\ntasks = [\"steady\"]", CANONICAL, ""));
    let out_dir = dir.path().join("out");
    let out = qfp(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--n",
        "14",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&out), 0);
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["n"], 14);
    assert_eq!(report["seed"], 9);
}

#[test]
fn evolve_writes_one_trajectory_per_state() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "ev.toml",
        &scenario("n = 12\ntasks = [\"evolve\"]", CANONICAL, "[time]\nt_max = 1.0\nstride = 0.25\n"),
    );
    let out_dir = dir.path().join("out");
    let out = qfp(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    for k in 0..3 {
        let csv = std::fs::read_to_string(out_dir.join(format!("trajectory_{k}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 1 + 5, "{csv}");
        assert!(out_dir.join(format!("states_{k}.json")).exists());
    }
    let report = read_json(&out_dir.join("report.json"));
    let trajectories = report["evolve"]["trajectories"].as_array().unwrap();
    assert_eq!(trajectories.len(), 3);
    for t in trajectories {
        assert!(t["max_trace_error"].as_f64().unwrap() < 1e-8);
    }
}

#[test]
fn purity_point_steady_and_wigner() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "pure.toml",
        &scenario(
            "n = 32\ntasks = [\"validate\", \"steady\", \"wigner\", \"report\"]",
            PURITY_POINT,
            r#"
[grid]
x_max = 8.0
nx = 161
v_max = 8.0
nv = 161

[thresholds]
expect_purity_class = "pure_steady"
steady_reference_distance_max = 1e-3
purity_min = 0.999
fidelity_min = 0.999
"#,
        ),
    );
    let out_dir = dir.path().join("out");
    let out = qfp(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&out_dir.join("report.json"));
    assert!(report["steady"]["purity"].as_f64().unwrap() > 0.999);
    assert!(report["steady"]["pure_state_fidelity"].as_f64().unwrap() > 0.999);
    let stated = report["steady"]["reference"]["stated_prefactor_trace"].as_f64().unwrap();
    assert!((stated - std::f64::consts::PI.powf(-0.5)).abs() < 1e-12);
    assert!((report["wigner"]["mass"].as_f64().unwrap() - 1.0).abs() < 1e-4);
    for f in ["steady_matrix.json", "gaussian_kernel.csv", "steady.json", "wigner.csv", "wigner.json", "report.md"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let md = std::fs::read_to_string(out_dir.join("report.md")).unwrap();
    assert!(md.contains("purity_class"));
}

#[test]
fn failing_threshold_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "strict.toml",
        &scenario("n = 12\ntasks = [\"steady\"]", CANONICAL, "[thresholds]\npurity_min = 0.99\n"),
    );
    let out_dir = dir.path().join("out");
    assert_eq!(code(&qfp(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])), 1);
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["passed"], false);
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["steady_purity"]);
}

#[test]
fn matrix_exit_code_counts_failures() {
    let dir = TempDir::new().unwrap();
    let suite = dir.path().join("suite");
    std::fs::create_dir(&suite).unwrap();
    write(&suite, "a-pass.toml", &scenario("n = 12\ntasks = [\"steady\"]", CANONICAL, ""));
    write(
        &suite,
        "b-fail.toml",
        &scenario("n = 12\ntasks = [\"steady\"]", CANONICAL, "[thresholds]\npurity_min = 0.99\n"),
    );
    write(&suite, "c-broken.toml", "n = ");
    write(&suite, "notes.txt", "ignored");
    let out_dir = dir.path().join("out");
    let out = qfp(&["matrix", "--config", suite.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stdout));
    let summary = read_json(&out_dir.join("matrix.json"));
    assert_eq!(summary["failures"], 2);
    let names: Vec<&str> = summary["scenarios"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["scenario"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["a-pass", "b-fail", "c-broken"]);

    let single = dir.path().join("single");
    std::fs::create_dir(&single).unwrap();
    let cfg = write(&single, "a-pass.toml", &scenario("n = 12\ntasks = [\"steady\"]", CANONICAL, ""));
    let m_out = dir.path().join("m");
    assert_eq!(code(&qfp(&["matrix", "--config", single.to_str().unwrap(), "--out", m_out.to_str().unwrap()])), 0);
    let r_out = dir.path().join("r");
    assert_eq!(code(&qfp(&["run", "--config", cfg.to_str().unwrap(), "--out", r_out.to_str().unwrap()])), 0);
    assert_eq!(
        std::fs::read(m_out.join("a-pass/report.json")).unwrap(),
        std::fs::read(r_out.join("report.json")).unwrap()
    );
}

#[test]
fn matrix_on_empty_dir_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = qfp(&["matrix", "--config", dir.path().to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}
