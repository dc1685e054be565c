use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use qpt_cli::formats::{ChiFile, CountFile, SCATTER_HEADER};
use qpt_core::process::ProcessMatrix;
use qpt_core::tomo::{apply_noise, CountNoise, NoiseSpec};
use serde_json::Value;
use tempfile::TempDir;

fn qpt(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_qpt"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn qpt");
    {
        let mut pipe = child.stdin.take().unwrap();
        if let Some(bytes) = stdin {
            pipe.write_all(bytes).unwrap();
        }
    }
    child.wait_with_output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_chi(dir: &TempDir, name: &str, chi: &ProcessMatrix) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, qpt_cli::formats::to_json(&ChiFile::from_process(chi))).unwrap();
    path
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn simulate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.path().join(name);
    let mut args = vec!["simulate", "--out", path_str(&path)];
    args.extend_from_slice(extra);
    ok(&qpt(&args, None));
    path
}

#[test]
fn simulate_noiseless_cnot_counts() {
    let dir = TempDir::new().unwrap();
    let path = simulate(&dir, "c.json", &["--gate", "cnot", "--pairs", "1000", "--noise", "none"]);
    let file: CountFile = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(file.records.len(), 256);
    let hh = file.records.iter().find(|r| r.input == "HH" && r.analyzer == "HH").unwrap();
    assert_eq!(hh.counts, 1000);
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = ["--seed", "7", "--count-noise", "poisson"];
    let a = std::fs::read(simulate(&dir, "a.json", &args)).unwrap();
    let b = std::fs::read(simulate(&dir, "b.json", &args)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unconstrained_gate_file_needs_override() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--seed", "1"]);
    let chi = dir.path().join("lin.json");
    ok(&qpt(&["reconstruct", "--method", "linear", "--counts", path_str(&counts), "--out", path_str(&chi)], None));
    let file: ChiFile = serde_json::from_str(&std::fs::read_to_string(&chi).unwrap()).unwrap();
    assert_eq!(file.flags, vec!["unconstrained"]);

    let gate = format!("chi-file:{}", path_str(&chi));
    let refused = qpt(&["simulate", "--gate", &gate, "--noise", "none"], None);
    assert_eq!(refused.status.code(), Some(4));
    assert!(!refused.stderr.is_empty());
    ok(&qpt(&["simulate", "--gate", &gate, "--noise", "none", "--allow-unphysical"], None));
}

#[test]
fn mle_reconstruction_of_noiseless_cnot() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--pairs", "1000", "--noise", "none"]);
    let chi = dir.path().join("chi.json");
    let out = qpt(&["reconstruct", "--counts", path_str(&counts), "--out", path_str(&chi)], None);
    ok(&out);
    let summary = String::from_utf8_lossy(&out.stderr);
    for key in ["objective_value", "tp_defect", "cp_defect", "iterations"] {
        assert!(summary.contains(key), "summary lacks {key}: {summary}");
    }
    let report = json(&qpt(&["metrics", "--chi", path_str(&chi), "--sweep-samples", "100"], None));
    assert!(report["process_fidelity"].as_f64().unwrap() >= 0.999);
}

#[test]
fn mle_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--seed", "5"]);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let args = ["reconstruct", "--counts", path_str(&counts), "--restarts", "1", "--seed", "3", "--out", path_str(&out)];
        ok(&qpt(&args, None));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn convergence_failure_exit_code() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--seed", "2"]);
    let chi = dir.path().join("chi.json");
    let out = qpt(
        &["reconstruct", "--counts", path_str(&counts), "--restarts", "1", "--lambda", "1e-9", "--out", path_str(&chi)],
        None,
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let file: ChiFile = serde_json::from_str(&std::fs::read_to_string(&chi).unwrap()).unwrap();
    assert_eq!(file.flags, vec!["unconstrained"]);
}

#[test]
fn malformed_count_file_names_field() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--noise", "none"]);
    let mut value: Value = serde_json::from_str(&std::fs::read_to_string(&counts).unwrap()).unwrap();
    value["records"][3]["counts"] = Value::from(-5);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, value.to_string()).unwrap();
    let out = qpt(&["reconstruct", "--counts", path_str(&bad)], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("records[3].counts"));

    value["records"][3]["counts"] = Value::from(0);
    value.as_object_mut().unwrap().remove("total_pairs");
    std::fs::write(&bad, value.to_string()).unwrap();
    let out = qpt(&["reconstruct", "--counts", path_str(&bad)], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("total_pairs"));

    let out = qpt(&["reconstruct"], Some(b"{ not json"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn metrics_of_ideal_cnot() {
    let dir = TempDir::new().unwrap();
    let chi = write_chi(&dir, "cnot.json", &ProcessMatrix::cnot());
    let scatter = dir.path().join("s.csv");
    let out = qpt(
        &["metrics", "--chi", path_str(&chi), "--sweep-samples", "300", "--seed", "4", "--scatter", path_str(&scatter)],
        None,
    );
    ok(&out);
    let report = json(&out);
    assert!((report["process_fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((report["average_purity"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((report["entangling_capability"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(report["sweep_seed"].as_u64(), Some(4));

    let csv = std::fs::read_to_string(scatter).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SCATTER_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 300);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[3], "1.000000000");
    }
}

#[test]
fn metrics_of_depolarized_process() {
    let dir = TempDir::new().unwrap();
    let full = apply_noise(&ProcessMatrix::cnot(), &NoiseSpec::new(1.0, 0.0, CountNoise::None).unwrap()).unwrap();
    let chi = write_chi(&dir, "depol.json", &full);
    let report = json(&qpt(&["metrics", "--chi", path_str(&chi), "--sweep-samples", "50"], None));
    assert!((report["process_fidelity"].as_f64().unwrap() - 0.0625).abs() < 1e-12);
    assert!((report["average_purity"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn metrics_refuses_unconstrained() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--seed", "9"]);
    let out = qpt(&["reconstruct", "--method", "linear", "--counts", path_str(&counts)], None);
    ok(&out);
    let refused = qpt(&["metrics", "--sweep-samples", "10"], Some(&out.stdout));
    assert_eq!(refused.status.code(), Some(4));
}

fn density(report: &Value) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let grid = |key: &str| -> Vec<Vec<f64>> {
        report[key]
            .as_array()
            .unwrap()
            .iter()
            .map(|row| row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect())
            .collect()
    };
    (grid("real"), grid("imag"))
}

#[test]
fn predict_examples() {
    let dir = TempDir::new().unwrap();
    let cnot = write_chi(&dir, "cnot.json", &ProcessMatrix::cnot());
    let ident = write_chi(&dir, "id.json", &ProcessMatrix::identity_2q());

    let report = json(&qpt(&["predict", "--chi", path_str(&cnot), "--input", "DH", "--ideal", "cnot"], None));
    let (re, im) = density(&report);
    for i in 0..4 {
        for j in 0..4 {
            let bell = if (i == 0 || i == 3) && (j == 0 || j == 3) { 0.5 } else { 0.0 };
            assert!((re[i][j] - bell).abs() < 1e-12 && im[i][j].abs() < 1e-12);
        }
    }
    assert!((report["tangle"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((report["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let report = json(&qpt(&["predict", "--chi", path_str(&ident), "--input", "HV"], None));
    let (re, _) = density(&report);
    assert!((re[1][1] - 1.0).abs() < 1e-12);
    assert!(report.get("fidelity").is_none());

    let report = json(&qpt(&["predict", "--chi", path_str(&cnot), "--amplitudes", "1,0,0,0"], None));
    let (re, _) = density(&report);
    assert!((re[0][0] - 1.0).abs() < 1e-12);

    let bad = qpt(&["predict", "--chi", path_str(&cnot), "--amplitudes", "1,1,0,0"], None);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn residual_examples() {
    let dir = TempDir::new().unwrap();
    let truth = write_chi(&dir, "cnot.json", &ProcessMatrix::cnot());
    let noiseless = simulate(&dir, "c.json", &["--noise", "none"]);
    let hist = dir.path().join("h.csv");
    let out = qpt(
        &["residuals", "--chi", path_str(&truth), "--counts", path_str(&noiseless), "--histogram", path_str(&hist), "--full"],
        None,
    );
    ok(&out);
    let report = json(&out);
    assert_eq!(report["sigma"].as_f64(), Some(0.0));
    assert_eq!(report["deltas"].as_array().unwrap().len(), 256);
    assert_eq!(std::fs::read_to_string(hist).unwrap().lines().count(), 1 + 21);

    let poisson = simulate(&dir, "p.json", &["--seed", "3"]);
    let fit = dir.path().join("fit.json");
    ok(&qpt(&["reconstruct", "--counts", path_str(&poisson), "--restarts", "1", "--out", path_str(&fit)], None));
    let report = json(&qpt(&["residuals", "--chi", path_str(&fit), "--counts", path_str(&poisson)], None));
    let sigma = report["sigma"].as_f64().unwrap();
    assert!(sigma > 0.0 && sigma.is_finite());
    assert!(report.get("deltas").is_none());
}

#[test]
fn chi_file_round_trip_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--seed", "12"]);
    for method in ["mle", "linear"] {
        let first = dir.path().join(format!("{method}.json"));
        ok(&qpt(
            &["reconstruct", "--method", method, "--restarts", "1", "--counts", path_str(&counts), "--out", path_str(&first)],
            None,
        ));
        let text = std::fs::read_to_string(&first).unwrap();
        let parsed: ChiFile = serde_json::from_str(&text).unwrap();
        let again = qpt_cli::formats::to_json(&ChiFile::from_process(&parsed.to_process().unwrap()));
        assert_eq!(text, again);
    }
}

#[test]
fn count_file_round_trip_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let path = simulate(&dir, "c.json", &["--seed", "4", "--depolarizing", "0.1", "--dephasing", "0.05"]);
    let text = std::fs::read_to_string(path).unwrap();
    let parsed: CountFile = serde_json::from_str(&text).unwrap();
    let again = qpt_cli::formats::to_json(&CountFile::from_counts(&parsed.to_counts().unwrap()));
    assert_eq!(text, again);
}

#[test]
fn bad_flags_fail_with_message() {
    let out = qpt(&["simulate", "--gate", "toffoli"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = qpt(&["simulate", "--out", "/nonexistent-dir/x.json"], None);
    assert_eq!(out.status.code(), Some(2));
}
