//! End-to-end checks of the binary: exit codes, JSON output, CSV
//! determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use liouville_core::distributions::{AnalyticGaussian, Distribution, GridDensity};

fn liouville(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liouville"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn check_canonical_distinguishes_maps_and_exit_codes() {
    let rot = liouville(&["check-canonical", "rotate", "--theta", "0.7853"]);
    assert_eq!(exit_code(&rot), 0, "{}", String::from_utf8_lossy(&rot.stderr));
    assert_eq!(stdout_json(&rot)["pass"], true);

    let dilate = liouville(&["check-canonical", "dilate", "--a", "2"]);
    assert_eq!(exit_code(&dilate), 3);
    let report = stdout_json(&dilate);
    assert_eq!(report["pass"], false);
    let det = report["max_det_residual"].as_f64().unwrap();
    assert!((det - 3.0).abs() < 1e-9, "det residual {det}");

    let bad_tol = liouville(&["check-canonical", "rotate", "--theta", "0.1", "--tol", "-1"]);
    assert_eq!(exit_code(&bad_tol), 2);

    let unknown = liouville(&["check-canonical", "moebius"]);
    assert_eq!(exit_code(&unknown), 2);

    let bad_flag = liouville(&["check-canonical", "rotate", "--banana", "1"]);
    assert_eq!(exit_code(&bad_flag), 2);
}

#[test]
fn entropy_command_recovers_known_values() {
    let dir = tempfile::tempdir().unwrap();

    let gaussian_csv = dir.path().join("gaussian.csv");
    let ens = Distribution::Gaussian(AnalyticGaussian::standard(1))
        .sample(100_000, 41)
        .unwrap();
    fs::write(&gaussian_csv, ens.to_csv_string()).unwrap();
    let out = liouville(&["entropy", "--input", gaussian_csv.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let est = stdout_json(&out);
    let value = est["value"].as_f64().unwrap();
    let truth = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    assert!((value - truth).abs() < 0.05, "knn value {value}");
    assert_eq!(est["method"], "knn");

    let uniform_csv = dir.path().join("uniform.csv");
    let uni = Distribution::Grid(GridDensity::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap())
        .sample(100_000, 42)
        .unwrap();
    fs::write(&uniform_csv, uni.to_csv_string()).unwrap();
    let out = liouville(&["entropy", "--input", uniform_csv.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let value = stdout_json(&out)["value"].as_f64().unwrap();
    assert!(value.abs() < 0.05, "uniform knn value {value}");

    // Too few samples for k is a usage error.
    let tiny_csv = dir.path().join("tiny.csv");
    fs::write(&tiny_csv, "q1,k1,weight\n0,0,0.4\n1,0,0.3\n0,1,0.3\n").unwrap();
    let out = liouville(&["entropy", "--input", tiny_csv.to_str().unwrap(), "--k", "4"]);
    assert_eq!(exit_code(&out), 2);

    // Coincident points fail with a remediation hint unless jittered.
    let dup_csv = dir.path().join("dups.csv");
    let mut text = String::from("q1,k1,weight\n");
    for i in 0..10 {
        let v = i / 2;
        text.push_str(&format!("{v},{v},0.1\n"));
    }
    fs::write(&dup_csv, &text).unwrap();
    let out = liouville(&["entropy", "--input", dup_csv.to_str().unwrap(), "--k", "1"]);
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("jitter"));
    let out = liouville(&[
        "entropy",
        "--input",
        dup_csv.to_str().unwrap(),
        "--k",
        "1",
        "--jitter",
        "on",
    ]);
    assert_eq!(exit_code(&out), 0);

    // The other estimators answer on the same file.
    for method in ["analytic", "grid"] {
        let out = liouville(&[
            "entropy",
            "--input",
            gaussian_csv.to_str().unwrap(),
            "--method",
            method,
        ]);
        assert_eq!(exit_code(&out), 0, "method {method}");
        let value = stdout_json(&out)["value"].as_f64().unwrap();
        assert!((value - truth).abs() < 0.1, "{method} value {value}");
    }
}

#[test]
fn evolve_writes_deterministic_csv_and_asserts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        dir.path(),
        "pendulum.json",
        r#"{
            "hamiltonian": {"name": "pendulum"},
            "initial": {"name": "gaussian", "mean": [1.5707963267948966, 0.0], "cov": [[0.01, 0.0], [0.0, 0.01]]},
            "representation": {"kind": "ensemble", "count": 5000},
            "integrator": {"scheme": "leapfrog", "dt": 0.001, "t_final": 0.5, "output_every": 250},
            "entropy": {"method": "knn", "k": 4, "jitter": false},
            "seed": 7
        }"#,
    );
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");

    let run = liouville(&["evolve", "--scenario", &scenario, "--out", out_a.to_str().unwrap()]);
    assert_eq!(exit_code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let summary = stdout_json(&run);
    assert_eq!(summary["rows"], 3);

    let rerun = liouville(&["evolve", "--scenario", &scenario, "--out", out_b.to_str().unwrap()]);
    assert_eq!(exit_code(&rerun), 0);
    let a = fs::read(&out_a).unwrap();
    let b = fs::read(&out_b).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "same scenario and seed must give byte-identical CSV");

    let header = String::from_utf8_lossy(&a);
    assert!(header.starts_with(
        "t,mean_q,mean_k,sigma_q,sigma_k,corr_qk,product,entropy,entropy_stderr,bound,energy\n"
    ));

    // Entropy is conserved far better than this slack; the assert passes.
    let asserted = liouville(&[
        "evolve",
        "--scenario",
        &scenario,
        "--out",
        out_a.to_str().unwrap(),
        "--assert-entropy",
        "0.05",
        "--assert-bound",
        "1e-6",
    ]);
    assert_eq!(exit_code(&asserted), 0, "{}", String::from_utf8_lossy(&asserted.stderr));

    // An impossible tolerance trips the check exit code.
    let tripped = liouville(&[
        "evolve",
        "--scenario",
        &scenario,
        "--out",
        out_a.to_str().unwrap(),
        "--assert-entropy",
        "1e-15",
    ]);
    assert_eq!(exit_code(&tripped), 3);
}

#[test]
fn evolve_analytic_scenario_holds_the_bound_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        dir.path(),
        "harmonic.json",
        r#"{
            "hamiltonian": {"name": "harmonic"},
            "initial": {"name": "gaussian", "mean": [0.0, 0.0], "cov": [[4.0, 0.0], [0.0, 0.25]]},
            "representation": {"kind": "analytic"},
            "integrator": {"scheme": "leapfrog", "dt": 0.001, "t_final": 6.0, "output_every": 200},
            "entropy": {"method": "analytic"},
            "seed": 0
        }"#,
    );
    let out_csv = dir.path().join("harmonic.csv");
    let run = liouville(&[
        "evolve",
        "--scenario",
        &scenario,
        "--out",
        out_csv.to_str().unwrap(),
        "--assert-entropy",
        "1e-12",
        "--assert-bound",
        "1e-6",
    ]);
    assert_eq!(exit_code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&out_csv).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let product: f64 = fields[6].parse().unwrap();
        let bound: f64 = fields[9].parse().unwrap();
        assert!(product >= bound - 1e-9, "row `{line}` dips under the bound");
    }
}

#[test]
fn evolve_rejects_bad_scenarios_with_usage_exit() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_scenario(
        dir.path(),
        "unknown.json",
        r#"{"hamiltonian": {"name": "wobbler"}}"#,
    );
    let out = dir.path().join("x.csv");
    let run = liouville(&["evolve", "--scenario", &unknown, "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&run), 2);

    let bad_dt = write_scenario(
        dir.path(),
        "bad_dt.json",
        r#"{"hamiltonian": {"name": "harmonic"}, "integrator": {"dt": -1.0}}"#,
    );
    let run = liouville(&["evolve", "--scenario", &bad_dt, "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("integrator.dt"));
}

#[test]
fn bound_reports_saturation_and_quantum_floor() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        dir.path(),
        "unit.json",
        r#"{
            "hamiltonian": {"name": "harmonic"},
            "initial": {"name": "gaussian"},
            "representation": {"kind": "analytic"},
            "entropy": {"method": "analytic"}
        }"#,
    );
    let out = liouville(&["bound", "--scenario", &scenario]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert!((report["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(report["saturated"], true);
    assert_eq!(report["quantum_floor"].as_f64().unwrap(), 0.5);
    assert_eq!(report["quantum_entropy"].as_f64().unwrap(), 0.0);
    assert_eq!(report["quantum_label"], "pure state: 0");

    let out = liouville(&["bound", "--scenario", &scenario, "--hbar", "2.0"]);
    assert_eq!(stdout_json(&out)["quantum_floor"].as_f64().unwrap(), 1.0);
}

#[test]
fn internal_reports_the_complex_identification() {
    let out = liouville(&["internal", "--a", "1", "--b", "1", "--samples", "200000"]);
    assert_eq!(exit_code(&out), 0);
    let report = stdout_json(&out);
    assert!((report["phase"].as_f64().unwrap() - 0.7853981633974483).abs() < 1e-12);
    assert!((report["predicted_pearson"].as_f64().unwrap() - 0.7071067811865475).abs() < 1e-12);
    assert!(report["mc_error"].as_f64().unwrap() < 5e-3);
    assert!((report["sigma_factor"].as_f64().unwrap() - 2.0f64.sqrt()).abs() < 1e-12);

    let degenerate = liouville(&["internal", "--a", "0", "--b", "0"]);
    assert_eq!(exit_code(&degenerate), 2);
}

#[test]
fn registry_lists_the_builtins() {
    let out = liouville(&["registry"]);
    assert_eq!(exit_code(&out), 0);
    let listing = stdout_json(&out);
    let text = listing.to_string();
    for name in ["pendulum", "quartic", "dilate", "two_blob_mixture", "yoshida4"] {
        assert!(text.contains(name), "registry is missing {name}");
    }
}

#[test]
fn thread_cap_env_var_is_accepted() {
    let out = Command::new(env!("CARGO_BIN_EXE_liouville"))
        .env("LIOUVILLE_THREADS", "1")
        .args(["internal", "--a", "1", "--b", "0", "--samples", "10000"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    // Capped and uncapped runs agree bitwise.
    let free = liouville(&["internal", "--a", "1", "--b", "0", "--samples", "10000"]);
    assert_eq!(out.stdout, free.stdout);
}
